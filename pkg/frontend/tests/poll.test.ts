import { describe, expect, it } from "vitest";
import { makePoller, mergeRecords } from "../src/poll.js";

describe("poller", () => {
  it("renders only monotonically newer snapshots", async () => {
    const seen: number[] = [];
    const answers = [1, 3, 2, 3, 5]; // a stale 2 and an unchanged 3 arrive
    const poller = makePoller(
      async () => ({ as_of_seq: answers.shift() ?? 5 }),
      (p) => seen.push(p.as_of_seq),
      1,
      () => 0,
      () => {},
    );
    for (let i = 0; i < 5; i++) await poller.tick();
    expect(seen).toEqual([1, 3, 5]);
  });

  it("drops ticks while a fetch is in flight", async () => {
    let resolve: (v: { as_of_seq: number }) => void = () => {};
    let fetches = 0;
    const poller = makePoller(
      () =>
        new Promise<{ as_of_seq: number }>((r) => {
          fetches += 1;
          resolve = r;
        }),
      () => {},
      1,
      () => 0,
      () => {},
    );
    const first = poller.tick();
    await poller.tick(); // overlaps: must not start a second fetch
    expect(fetches).toBe(1);
    resolve({ as_of_seq: 1 });
    await first;
    const second = poller.tick();
    expect(fetches).toBe(2);
    resolve({ as_of_seq: 2 });
    await second;
  });

  it("survives fetch errors and keeps polling", async () => {
    let calls = 0;
    const poller = makePoller(
      async () => {
        calls += 1;
        if (calls === 1) throw new Error("boom");
        return { as_of_seq: calls };
      },
      () => {},
      1,
      () => 0,
      () => {},
    );
    await poller.tick();
    await poller.tick();
    expect(calls).toBe(2);
  });

  it("start/stop schedule and cancel", async () => {
    const scheduled: (() => void)[] = [];
    let cancelled = 0;
    const poller = makePoller(
      async () => ({ as_of_seq: 1 }),
      () => {},
      50,
      (fn) => {
        scheduled.push(fn as () => void);
        return scheduled.length;
      },
      () => {
        cancelled += 1;
      },
    );
    poller.start();
    expect(poller.running).toBe(true);
    await new Promise((r) => setTimeout(r, 10)); // let the first tick settle
    poller.stop();
    expect(poller.running).toBe(false);
    expect(scheduled.length).toBeGreaterThan(0);
    expect(cancelled).toBeGreaterThan(0);
  });
});

describe("record merging", () => {
  it("no duplicates, no gaps, ascending", () => {
    const a = [{ seq: 1 }, { seq: 2 }, { seq: 3 }];
    const b = [{ seq: 3 }, { seq: 4 }];
    expect(mergeRecords(a, b).map((r) => r.seq)).toEqual([1, 2, 3, 4]);
  });

  it("is idempotent", () => {
    const a = [{ seq: 2 }, { seq: 1 }];
    const once = mergeRecords(a, a);
    expect(mergeRecords(once, once)).toEqual(once);
  });
});
