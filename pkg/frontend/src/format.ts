/**
 * Plain-text settings format for export/import.
 *
 * `key = value` lines, `#` comments. `z` is a comma-separated float vector;
 * values are written with String(), the shortest representation that parses
 * back to the identical float64, so a round trip is exact. Gammas are either
 * a number (explicit override) or `auto` (model-predicted). The `z` line
 * feeds the CLI's `--z` flag unchanged.
 */

export interface Settings {
  z: number[];
  gammaBase: number | null;
  gammaPost: number | null;
}

export class SettingsError extends Error {}

function gammaText(v: number | null): string {
  return v === null ? "auto" : String(v);
}

export function serializeSettings(s: Settings): string {
  return [
    "z = " + s.z.map((v) => String(v)).join(","),
    "gamma_base = " + gammaText(s.gammaBase),
    "gamma_post = " + gammaText(s.gammaPost),
    "",
  ].join("\n");
}

function parseGamma(raw: string, key: string): number | null {
  if (raw === "auto") return null;
  const v = Number(raw);
  if (!Number.isFinite(v)) {
    throw new SettingsError(`${key} must be a number or "auto"`);
  }
  return v;
}

export function parseSettings(text: string, dZ: number): Settings {
  let z: number[] | null = null;
  let gammaBase: number | null = null;
  let gammaPost: number | null = null;
  for (const rawLine of text.split("\n")) {
    const line = rawLine.split("#", 1)[0].trim();
    if (line === "") continue;
    const eq = line.indexOf("=");
    if (eq < 0) throw new SettingsError(`expected "key = value": ${line}`);
    const key = line.slice(0, eq).trim();
    const value = line.slice(eq + 1).trim();
    if (key === "z") {
      const parts = value.split(",").map((p) => Number(p.trim()));
      if (parts.length !== dZ || parts.some((v) => !Number.isFinite(v))) {
        throw new SettingsError(`z must be ${dZ} finite floats`);
      }
      z = parts;
    } else if (key === "gamma_base") {
      gammaBase = parseGamma(value, key);
    } else if (key === "gamma_post") {
      gammaPost = parseGamma(value, key);
    } else {
      throw new SettingsError(`unknown key: ${key}`);
    }
  }
  if (z === null) throw new SettingsError("missing z");
  return { z, gammaBase, gammaPost };
}

/** `tonescope_<session>_<UTC timestamp>`; callers append an extension. */
export function exportBasename(sessionId: string, when: Date): string {
  const pad = (n: number) => String(n).padStart(2, "0");
  const stamp =
    `${when.getUTCFullYear()}${pad(when.getUTCMonth() + 1)}` +
    `${pad(when.getUTCDate())}-${pad(when.getUTCHours())}` +
    `${pad(when.getUTCMinutes())}${pad(when.getUTCSeconds())}`;
  return `tonescope_${sessionId}_${stamp}`;
}
