/**
 * Trailing-edge debounce.
 *
 * The returned function delays `fn` until `delayMs` has elapsed since the
 * most recent call, so a burst of calls collapses into one invocation with
 * the last arguments. `.cancel()` drops any pending call; `.flush()` runs a
 * pending call immediately.
 */
export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  cancel(): void;
  flush(): void;
}

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  delayMs: number,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let last: A | null = null;

  const fire = () => {
    timer = null;
    if (last !== null) {
      const args = last;
      last = null;
      fn(...args);
    }
  };

  const debounced = (...args: A) => {
    last = args;
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(fire, delayMs);
  };
  debounced.cancel = () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
    last = null;
  };
  debounced.flush = () => {
    if (timer !== null) {
      clearTimeout(timer);
      fire();
    }
  };
  return debounced;
}
