/** DOM wiring for the audiobook demo flow:
 * search -> pick or enroll a voice -> tune rate/pitch -> preview ->
 * dedication -> submit -> track to download.
 */

import { ApiClient, ApiError, BookSummary, JobRecord } from "./api.js";
import { pollJob, PollHandle } from "./poll.js";
import { MicrophoneRecorder, Recorder, RecorderFactory } from "./recorder.js";
import {
  MAX_DEDICATION_CHARS,
  MIN_ENROLL_SECONDS,
  UiState,
  applyJobStatus,
  canPreview,
  canSubmit,
  enrollmentLongEnough,
  initialState,
  setPitch,
  setRate,
} from "./state.js";
import { encodeWavPcm16 } from "./wav.js";

export type WavPlayer = (wav: Blob) => Promise<void>;

export interface AppOptions {
  recorderFactory?: RecorderFactory;
  player?: WavPlayer;
  debounceMs?: number;
  pollIntervalMs?: number;
}

const defaultPlayer: WavPlayer = async (wav) => {
  const url = URL.createObjectURL(wav);
  try {
    const audio = new Audio(url);
    await audio.play();
  } finally {
    // the element keeps the blob alive while playing
    setTimeout(() => URL.revokeObjectURL(url), 60_000);
  }
};

export class App {
  readonly state: UiState = initialState();
  readonly searchInput: HTMLInputElement;
  readonly resultsList: HTMLUListElement;
  readonly voiceSelect: HTMLSelectElement;
  readonly recordButton: HTMLButtonElement;
  readonly rateSlider: HTMLInputElement;
  readonly pitchSlider: HTMLInputElement;
  readonly dedicationInput: HTMLTextAreaElement;
  readonly previewButton: HTMLButtonElement;
  readonly submitButton: HTMLButtonElement;
  readonly statusLine: HTMLElement;
  readonly errorBanner: HTMLElement;
  readonly downloadLink: HTMLAnchorElement;

  private debounceTimer: ReturnType<typeof setTimeout> | null = null;
  private poller: PollHandle | null = null;
  private previewInFlight = false;
  private recorder: Recorder | null = null;
  private readonly recorderFactory: RecorderFactory;
  private readonly player: WavPlayer;
  private readonly debounceMs: number;
  private readonly pollIntervalMs: number;

  constructor(
    readonly root: HTMLElement,
    readonly api: ApiClient,
    options: AppOptions = {},
  ) {
    this.recorderFactory =
      options.recorderFactory ?? (() => new MicrophoneRecorder());
    this.player = options.player ?? defaultPlayer;
    this.debounceMs = options.debounceMs ?? 300;
    this.pollIntervalMs = options.pollIntervalMs ?? 2000;

    root.innerHTML = `
      <div class="banner" id="error-banner" hidden></div>
      <section class="search">
        <input id="search" type="search" placeholder="Search titles and authors" />
        <ul id="results"></ul>
      </section>
      <section class="voice">
        <select id="voice"><option value="">Choose a voice…</option></select>
        <button id="record">Record my voice</button>
        <label>Rate <input id="rate" type="range" min="0.5" max="3" step="0.05" value="1" /></label>
        <label>Pitch <input id="pitch" type="range" min="-12" max="12" step="1" value="0" /></label>
      </section>
      <section class="job">
        <textarea id="dedication" maxlength="${MAX_DEDICATION_CHARS}"
          placeholder="Optional dedication"></textarea>
        <button id="preview" disabled>Preview</button>
        <button id="submit" disabled>Create audiobook</button>
        <p id="status"></p>
        <a id="download" hidden>Download audiobook</a>
      </section>
    `;
    this.searchInput = root.querySelector("#search")!;
    this.resultsList = root.querySelector("#results")!;
    this.voiceSelect = root.querySelector("#voice")!;
    this.recordButton = root.querySelector("#record")!;
    this.rateSlider = root.querySelector("#rate")!;
    this.pitchSlider = root.querySelector("#pitch")!;
    this.dedicationInput = root.querySelector("#dedication")!;
    this.previewButton = root.querySelector("#preview")!;
    this.submitButton = root.querySelector("#submit")!;
    this.statusLine = root.querySelector("#status")!;
    this.errorBanner = root.querySelector("#error-banner")!;
    this.downloadLink = root.querySelector("#download")!;

    this.searchInput.addEventListener("input", () => {
      this.scheduleSearch(this.searchInput.value);
    });
    this.voiceSelect.addEventListener("change", () => {
      this.state.voiceId = this.voiceSelect.value || null;
      this.refreshControls();
    });
    this.rateSlider.addEventListener("input", () => {
      setRate(this.state, Number(this.rateSlider.value));
    });
    this.pitchSlider.addEventListener("input", () => {
      setPitch(this.state, Number(this.pitchSlider.value));
    });
    this.dedicationInput.addEventListener("input", () => {
      this.state.dedication = this.dedicationInput.value;
      this.refreshControls();
    });
    this.recordButton.addEventListener("click", () => {
      void this.toggleRecording();
    });
    this.previewButton.addEventListener("click", () => {
      void this.playPreview();
    });
    this.submitButton.addEventListener("click", () => {
      void this.submitJob();
    });
  }

  /** Cancel timers before navigating away. */
  destroy(): void {
    if (this.debounceTimer !== null) {
      clearTimeout(this.debounceTimer);
    }
    this.poller?.stop();
  }

  private showError(message: string): void {
    this.errorBanner.textContent = message;
    this.errorBanner.hidden = false;
  }

  private clearError(): void {
    this.errorBanner.hidden = true;
    this.errorBanner.textContent = "";
  }

  private refreshControls(): void {
    this.previewButton.disabled = !canPreview(this.state) || this.previewInFlight;
    this.submitButton.disabled = !canSubmit(this.state);
  }

  private scheduleSearch(query: string): void {
    if (this.debounceTimer !== null) {
      clearTimeout(this.debounceTimer);
    }
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = null;
      void this.runSearch(query);
    }, this.debounceMs);
  }

  async runSearch(query: string): Promise<void> {
    try {
      const books = await this.api.searchBooks(query);
      this.clearError();
      this.renderResults(books);
    } catch {
      this.showError("The audiobook service is unreachable.");
    }
  }

  private renderResults(books: BookSummary[]): void {
    this.resultsList.innerHTML = "";
    for (const book of books) {
      const item = document.createElement("li");
      const button = document.createElement("button");
      button.textContent = book.author
        ? `${book.title} — ${book.author}`
        : book.title;
      button.disabled = !book.eligible;
      button.dataset.bookId = book.book_id;
      button.addEventListener("click", () => this.selectBook(book));
      item.appendChild(button);
      this.resultsList.appendChild(item);
    }
  }

  selectBook(book: BookSummary): void {
    if (!book.eligible) {
      return;
    }
    this.state.selectedBook = book;
    this.statusLine.textContent = `Selected “${book.title}”.`;
    this.refreshControls();
  }

  async loadVoices(): Promise<void> {
    const voices = await this.api.listVoices();
    const current = this.voiceSelect.value;
    this.voiceSelect.innerHTML = '<option value="">Choose a voice…</option>';
    for (const voice of voices) {
      const option = document.createElement("option");
      option.value = voice.voice_id;
      option.textContent =
        voice.origin === "enrolled" ? `${voice.voice_id} (yours)` : voice.voice_id;
      this.voiceSelect.appendChild(option);
    }
    this.voiceSelect.value = current;
  }

  private async toggleRecording(): Promise<void> {
    if (this.recorder === null) {
      try {
        this.recorder = this.recorderFactory();
        await this.recorder.start();
        this.recordButton.textContent = "Stop recording";
        this.statusLine.textContent = `Recording… speak for at least ${MIN_ENROLL_SECONDS} seconds.`;
      } catch {
        this.recorder = null;
        this.showError(
          "Microphone access was denied; allow it in the browser to enroll a voice.",
        );
      }
      return;
    }
    const recorder = this.recorder;
    this.recorder = null;
    this.recordButton.textContent = "Record my voice";
    const capture = await recorder.stop();
    if (!enrollmentLongEnough(capture.samples.length, capture.sampleRate)) {
      this.statusLine.textContent = `Recording too short: ${MIN_ENROLL_SECONDS} seconds minimum.`;
      return;
    }
    const wav = encodeWavPcm16(capture.samples, capture.sampleRate);
    try {
      const voiceId = await this.api.enrollVoice(wav);
      await this.loadVoices();
      this.voiceSelect.value = voiceId;
      this.state.voiceId = voiceId;
      this.statusLine.textContent = `Voice ${voiceId} enrolled.`;
      this.clearError();
      this.refreshControls();
    } catch (err) {
      this.showError(
        err instanceof ApiError ? err.message : "Voice enrollment failed.",
      );
    }
  }

  async playPreview(): Promise<void> {
    const book = this.state.selectedBook;
    if (book === null || this.state.voiceId === null || this.previewInFlight) {
      return;
    }
    this.previewInFlight = true;
    this.refreshControls();
    try {
      const wav = await this.api.preview({
        book_id: book.book_id,
        chapter: 1,
        voice_id: this.state.voiceId,
        rate: this.state.rate,
        pitch: this.state.pitch,
      });
      this.clearError();
      await this.player(wav);
    } catch (err) {
      if (err instanceof ApiError && err.status === 502) {
        this.showError("Preview failed upstream; press Preview to retry.");
      } else {
        this.showError(
          err instanceof ApiError ? err.message : "Preview failed.",
        );
      }
    } finally {
      this.previewInFlight = false;
      this.refreshControls();
    }
  }

  async submitJob(): Promise<void> {
    if (!canSubmit(this.state)) {
      return;
    }
    const book = this.state.selectedBook!;
    try {
      const record = await this.api.createJob({
        book_id: book.book_id,
        voice_id: this.state.voiceId!,
        rate: this.state.rate,
        pitch: this.state.pitch,
        dedication: this.state.dedication,
      });
      this.clearError();
      this.state.activeJob = {
        jobId: record.job_id,
        status: record.status,
        error: "",
      };
      this.downloadLink.hidden = true;
      this.statusLine.textContent = `Job ${record.job_id.slice(0, 8)}…: ${record.status}`;
      this.startPolling(record.job_id);
    } catch (err) {
      this.showError(
        err instanceof ApiError ? err.message : "Job submission failed.",
      );
    }
  }

  private startPolling(jobId: string): void {
    this.poller?.stop();
    this.poller = pollJob(
      () => this.api.jobStatus(jobId),
      (record) => this.onJobUpdate(record),
      () => this.showError("Lost contact with the service while polling."),
      this.pollIntervalMs,
    );
  }

  private onJobUpdate(record: JobRecord): void {
    if (!applyJobStatus(this.state, record.status, record.error)) {
      return;
    }
    this.statusLine.textContent = `Job ${record.job_id.slice(0, 8)}…: ${record.status}`;
    if (record.status === "done") {
      this.downloadLink.href = this.api.artifactUrl(record.job_id);
      this.downloadLink.hidden = false;
    } else if (record.status === "failed") {
      this.showError(`Audiobook build failed: ${record.error}`);
    }
  }
}

export function mountApp(
  root: HTMLElement,
  baseUrl: string,
  options: AppOptions = {},
): App {
  const app = new App(root, new ApiClient(baseUrl), options);
  void app.loadVoices().catch(() => {
    app.runSearch(""); // surfaces the banner through the same path
  });
  void app.runSearch("");
  return app;
}
