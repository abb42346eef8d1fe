/**
 * Polling with a monotone cursor and an in-flight guard: one request at
 * a time, ticks dropped while a fetch is outstanding, and stale answers
 * (below the cursor already rendered) never repaint the screen.
 */

export interface Poller {
  start(): void;
  stop(): void;
  /** Run one cycle immediately (also used by tests). */
  tick(): Promise<void>;
  readonly running: boolean;
}

export function makePoller<T extends { as_of_seq: number }>(
  fetchOnce: () => Promise<T | null>,
  render: (payload: T) => void,
  intervalMs = 2000,
  schedule: (fn: () => void, ms: number) => unknown = setTimeout,
  cancel: (handle: unknown) => void = clearTimeout as (h: unknown) => void,
): Poller {
  let cursor = -1;
  let inFlight = false;
  let timer: unknown = null;
  let running = false;

  async function tick(): Promise<void> {
    if (inFlight) return; // overlapping polls are dropped, not queued
    inFlight = true;
    try {
      const payload = await fetchOnce();
      if (payload !== null && payload.as_of_seq > cursor) {
        cursor = payload.as_of_seq;
        render(payload);
      }
    } catch {
      // transient failure: keep the last rendered state, retry next tick
    } finally {
      inFlight = false;
    }
  }

  function loop(): void {
    if (!running) return;
    timer = schedule(async () => {
      await tick();
      loop();
    }, intervalMs);
  }

  return {
    get running() {
      return running;
    },
    start() {
      if (running) return;
      running = true;
      void tick().then(() => loop());
    },
    stop() {
      running = false;
      if (timer !== null) cancel(timer);
      timer = null;
    },
    tick,
  };
}

/**
 * Merge a freshly fetched page of records into an existing list by seq;
 * duplicates collapse, order stays ascending (cursor pagination helper).
 */
export function mergeRecords<T extends { seq: number }>(existing: T[], incoming: T[]): T[] {
  const by = new Map<number, T>();
  for (const r of existing) by.set(r.seq, r);
  for (const r of incoming) by.set(r.seq, r);
  return [...by.values()].sort((a, b) => a.seq - b.seq);
}
