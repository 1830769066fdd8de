/** UI state and its guards.
 *
 * The submit control stays disabled until both a book and a voice are
 * selected; job status never moves backwards out of a terminal state.
 */

import type { BookSummary, JobStatus } from "./api.js";

export const MIN_ENROLL_SECONDS = 5;
export const MAX_DEDICATION_CHARS = 500;
export const RATE_RANGE: [number, number] = [0.5, 3.0];
export const PITCH_RANGE: [number, number] = [-12, 12];

export interface ActiveJob {
  jobId: string;
  status: JobStatus;
  error: string;
}

export interface UiState {
  selectedBook: BookSummary | null;
  voiceId: string | null;
  rate: number;
  pitch: number;
  dedication: string;
  activeJob: ActiveJob | null;
}

export function initialState(): UiState {
  return {
    selectedBook: null,
    voiceId: null,
    rate: 1.0,
    pitch: 0.0,
    dedication: "",
    activeJob: null,
  };
}

export function canSubmit(state: UiState): boolean {
  return (
    state.selectedBook !== null &&
    state.selectedBook.eligible &&
    state.voiceId !== null &&
    state.dedication.length <= MAX_DEDICATION_CHARS
  );
}

export function canPreview(state: UiState): boolean {
  return (
    state.selectedBook !== null &&
    state.selectedBook.eligible &&
    state.voiceId !== null
  );
}

function clamp(value: number, [lo, hi]: [number, number]): number {
  return Math.min(hi, Math.max(lo, value));
}

export function setRate(state: UiState, rate: number): void {
  state.rate = clamp(rate, RATE_RANGE);
}

export function setPitch(state: UiState, pitch: number): void {
  state.pitch = clamp(pitch, PITCH_RANGE);
}

export function isTerminal(status: JobStatus): boolean {
  return status === "done" || status === "failed";
}

/** Apply a polled status; returns false when the update was ignored
 * because the job already reached a terminal state. */
export function applyJobStatus(
  state: UiState,
  status: JobStatus,
  error = "",
): boolean {
  const job = state.activeJob;
  if (job === null) {
    return false;
  }
  if (isTerminal(job.status)) {
    return false;
  }
  job.status = status;
  job.error = error;
  return true;
}

export function enrollmentLongEnough(
  sampleCount: number,
  sampleRate: number,
): boolean {
  return sampleCount / sampleRate >= MIN_ENROLL_SECONDS;
}
