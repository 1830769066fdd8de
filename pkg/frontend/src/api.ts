/** Typed client for the pagecast service; only documented paths and verbs. */

export interface BookSummary {
  book_id: string;
  title: string;
  author: string;
  chapter_count: number;
  cluster_id: number | null;
  eligible: boolean;
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobRecord {
  job_id: string;
  book_id: string;
  voice_id: string;
  status: JobStatus;
  artifact_path: string;
  error: string;
}

export interface VoiceInfo {
  voice_id: string;
  origin: "builtin" | "enrolled";
}

export interface PreviewParams {
  book_id: string;
  chapter: number;
  sentence_count?: number;
  voice_id: string;
  rate: number;
  pitch: number;
}

export interface JobParams {
  book_id: string;
  voice_id: string;
  rate: number;
  pitch: number;
  dedication: string;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function errorMessage(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    return body.error ?? resp.statusText;
  } catch {
    return resp.statusText;
  }
}

export class ApiClient {
  constructor(private baseUrl: string, private fetchFn: typeof fetch = fetch) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async checked(resp: Response): Promise<Response> {
    if (!resp.ok) {
      throw new ApiError(resp.status, await errorMessage(resp));
    }
    return resp;
  }

  async searchBooks(query: string, limit = 20): Promise<BookSummary[]> {
    const params = new URLSearchParams({ q: query, limit: String(limit) });
    const resp = await this.checked(
      await this.fetchFn(this.url(`/books?${params}`)),
    );
    return resp.json();
  }

  async listVoices(): Promise<VoiceInfo[]> {
    const resp = await this.checked(await this.fetchFn(this.url("/voices")));
    return resp.json();
  }

  async enrollVoice(wav: ArrayBuffer | Uint8Array): Promise<string> {
    // hand-rolled multipart body: FormData serialization differs across
    // fetch implementations, raw bytes do not
    const boundary =
      "----pagecast" + Math.random().toString(16).slice(2).padEnd(12, "0");
    const encoder = new TextEncoder();
    const head = encoder.encode(
      `--${boundary}\r\n` +
        'Content-Disposition: form-data; name="file"; filename="enrollment.wav"\r\n' +
        "Content-Type: audio/wav\r\n\r\n",
    );
    const tail = encoder.encode(`\r\n--${boundary}--\r\n`);
    const audio = wav instanceof Uint8Array ? wav : new Uint8Array(wav);
    const payload = new Uint8Array(head.length + audio.length + tail.length);
    payload.set(head, 0);
    payload.set(audio, head.length);
    payload.set(tail, head.length + audio.length);
    const resp = await this.checked(
      await this.fetchFn(this.url("/voices/enroll"), {
        method: "POST",
        headers: {
          "Content-Type": `multipart/form-data; boundary=${boundary}`,
        },
        body: payload,
      }),
    );
    return (await resp.json()).voice_id;
  }

  async preview(params: PreviewParams): Promise<Blob> {
    const resp = await this.checked(
      await this.fetchFn(this.url("/preview"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(params),
      }),
    );
    return resp.blob();
  }

  async createJob(params: JobParams): Promise<JobRecord> {
    const resp = await this.checked(
      await this.fetchFn(this.url("/jobs"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(params),
      }),
    );
    return resp.json();
  }

  async jobStatus(jobId: string): Promise<JobRecord> {
    const resp = await this.checked(
      await this.fetchFn(this.url(`/jobs/${jobId}`)),
    );
    return resp.json();
  }

  artifactUrl(jobId: string): string {
    return this.url(`/jobs/${jobId}/artifact`);
  }
}
