/** Job status polling that stops itself at a terminal status. */

import type { JobRecord } from "./api.js";
import { isTerminal } from "./state.js";

export interface PollHandle {
  stop(): void;
  readonly stopped: boolean;
}

export function pollJob(
  fetchStatus: () => Promise<JobRecord>,
  onUpdate: (record: JobRecord) => void,
  onError: (err: unknown) => void,
  intervalMs = 2000,
): PollHandle {
  let stopped = false;
  let timer: ReturnType<typeof setTimeout> | null = null;

  const stop = () => {
    stopped = true;
    if (timer !== null) {
      clearTimeout(timer);
      timer = null;
    }
  };

  const tick = async () => {
    if (stopped) {
      return;
    }
    try {
      const record = await fetchStatus();
      if (stopped) {
        return;
      }
      onUpdate(record);
      if (isTerminal(record.status)) {
        stop();
        return;
      }
    } catch (err) {
      if (stopped) {
        return;
      }
      onError(err);
      stop();
      return;
    }
    timer = setTimeout(tick, intervalMs);
  };

  timer = setTimeout(tick, intervalMs);
  return {
    stop,
    get stopped() {
      return stopped;
    },
  };
}
