/** Microphone capture producing raw PCM for client-side WAV encoding.
 *
 * The browser path records through an AudioContext so we control the
 * sample format; tests inject a fake capture with prerecorded samples.
 */

export interface Capture {
  samples: Float32Array;
  sampleRate: number;
}

export interface Recorder {
  start(): Promise<void>;
  stop(): Promise<Capture>;
}

export type RecorderFactory = () => Recorder;

export class MicrophoneRecorder implements Recorder {
  private chunks: Float32Array[] = [];
  private sampleRate = 0;
  private stream: MediaStream | null = null;
  private context: AudioContext | null = null;
  private processor: ScriptProcessorNode | null = null;

  async start(): Promise<void> {
    this.stream = await navigator.mediaDevices.getUserMedia({ audio: true });
    this.context = new AudioContext();
    this.sampleRate = this.context.sampleRate;
    const source = this.context.createMediaStreamSource(this.stream);
    this.processor = this.context.createScriptProcessor(4096, 1, 1);
    this.processor.onaudioprocess = (event) => {
      this.chunks.push(new Float32Array(event.inputBuffer.getChannelData(0)));
    };
    source.connect(this.processor);
    this.processor.connect(this.context.destination);
  }

  async stop(): Promise<Capture> {
    this.processor?.disconnect();
    this.stream?.getTracks().forEach((track) => track.stop());
    await this.context?.close();
    const total = this.chunks.reduce((n, c) => n + c.length, 0);
    const samples = new Float32Array(total);
    let offset = 0;
    for (const chunk of this.chunks) {
      samples.set(chunk, offset);
      offset += chunk.length;
    }
    this.chunks = [];
    return { samples, sampleRate: this.sampleRate };
  }
}
