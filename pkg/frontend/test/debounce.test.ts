import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { debounce } from "../src/debounce.js";

describe("debounce", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("collapses a burst into one trailing call with the last args", () => {
    const calls: number[] = [];
    const d = debounce((v: number) => calls.push(v), 150);
    for (let i = 0; i < 10; i++) d(i);
    vi.advanceTimersByTime(149);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(1);
    expect(calls).toEqual([9]);
  });

  it("fires once per quiet period", () => {
    const calls: number[] = [];
    const d = debounce((v: number) => calls.push(v), 150);
    d(1);
    vi.advanceTimersByTime(150);
    d(2);
    d(3);
    vi.advanceTimersByTime(150);
    expect(calls).toEqual([1, 3]);
  });

  it("restarts the window on every call", () => {
    const calls: number[] = [];
    const d = debounce((v: number) => calls.push(v), 150);
    d(1);
    vi.advanceTimersByTime(100);
    d(2);
    vi.advanceTimersByTime(100);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(50);
    expect(calls).toEqual([2]);
  });

  it("cancel drops the pending call", () => {
    const calls: number[] = [];
    const d = debounce((v: number) => calls.push(v), 150);
    d(1);
    d.cancel();
    vi.advanceTimersByTime(1000);
    expect(calls).toEqual([]);
  });

  it("flush runs the pending call immediately, exactly once", () => {
    const calls: number[] = [];
    const d = debounce((v: number) => calls.push(v), 150);
    d(7);
    d.flush();
    expect(calls).toEqual([7]);
    vi.advanceTimersByTime(1000);
    expect(calls).toEqual([7]);
    d.flush(); // nothing pending: no-op
    expect(calls).toEqual([7]);
  });
});
