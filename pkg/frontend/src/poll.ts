/** Optimizer job polling with progressive convergence updates. */

import type { Api, JobStatus } from "./api.js";

export interface PollHandle {
  done: Promise<JobStatus>;
  cancel: () => void;
}

export function pollJob(
  api: Api,
  jobId: string,
  onProgress: (convergence: number[]) => void,
  intervalMs = 500,
  timers: { set: typeof setTimeout; clear: typeof clearTimeout } = {
    set: setTimeout.bind(globalThis),
    clear: clearTimeout.bind(globalThis),
  },
): PollHandle {
  let cancelled = false;
  let handle: ReturnType<typeof setTimeout> | null = null;
  let rejectNow: (err: Error) => void = () => undefined;

  const done = new Promise<JobStatus>((resolve, reject) => {
    rejectNow = reject;
    const tick = async () => {
      if (cancelled) {
        reject(new Error("cancelled"));
        return;
      }
      let status: JobStatus;
      try {
        status = await api.jobStatus(jobId);
      } catch (err) {
        reject(err);
        return;
      }
      onProgress(status.convergence ?? []);
      if (status.status === "done") {
        resolve(status);
      } else if (status.status === "failed") {
        reject(new Error(status.error ?? "optimization failed"));
      } else {
        handle = timers.set(tick, intervalMs);
      }
    };
    void tick();
  });

  return {
    done,
    cancel: () => {
      cancelled = true;
      if (handle !== null) timers.clear(handle);
      rejectNow(new Error("cancelled"));
    },
  };
}
