/**
 * DOM-free explorer state machine.
 *
 * Owns the latent sliders, gamma overrides, render scheduling, candidate
 * gallery, and export payloads; the host (main.ts, or a test) receives state
 * through the `ExplorerEvents` callbacks and never touches the API itself.
 *
 * Render scheduling contract: slider moves are debounced to one trailing
 * request; at most one render is in flight, with the newest snapshot parked
 * in `pending` while one runs; a response is applied only if no newer
 * request has been issued since (stale responses leave the UI unchanged).
 */

import {
  Candidate,
  RenderParams,
  RenderResult,
  SessionInfo,
} from "./api.js";
import { debounce, Debounced } from "./debounce.js";
import {
  exportBasename,
  parseSettings,
  serializeSettings,
  SettingsError,
} from "./format.js";

export const SLIDER_MIN = -3;
export const SLIDER_MAX = 3;
export const DEBOUNCE_MS = 150;
// Server-side gamma validation ranges, mirrored for input clamping.
export const GAMMA_BASE_RANGE: readonly [number, number] = [0.8, 2.8];
export const GAMMA_POST_RANGE: readonly [number, number] = [1.7, 3.7];

export interface Scores {
  q: number;
  s: number;
  n: number;
  gammaBase: number;
  gammaPost: number;
}

export type Busy = "render" | "optimize" | null;

/** The slice of the API the controller consumes (stubbed in tests). */
export interface ExplorerApi {
  createSession(hdr: Blob, name?: string): Promise<SessionInfo>;
  render(sessionId: string, params: RenderParams): Promise<RenderResult>;
  optimize(sessionId: string, starts: number,
           iters: number): Promise<Candidate[]>;
  previewUrl(path: string): string;
}

export interface ExplorerEvents {
  onSession(info: { sessionId: string; dZ: number }): void;
  onSliders(z: readonly number[]): void;
  onPreview(url: string): void;
  onScores(scores: Scores | null): void;
  /** null = no optimize run yet; [] = run returned nothing (empty state). */
  onGallery(candidates: readonly Candidate[] | null): void;
  onBusy(busy: Busy): void;
  onToast(message: string): void;
}

export interface ExplorerOptions {
  debounceMs?: number;
  now?: () => Date;
}

interface RenderSnapshot {
  sessionId: string;
  params: RenderParams;
}

function message(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}

export class ExplorerController {
  private readonly now: () => Date;
  private readonly scheduleRender: Debounced<[]>;

  private sessionId: string | null = null;
  private dZ = 0;
  private z: number[] = [];
  private gammaBase: number | null = null;
  private gammaPost: number | null = null;

  private seq = 0; // id of the newest issued render request
  private inFlight = false;
  private pending: RenderSnapshot | null = null;
  private optimizing = false;

  private lastRender: RenderResult | null = null;
  private gallery: readonly Candidate[] | null = null;

  constructor(
    private readonly api: ExplorerApi,
    private readonly events: ExplorerEvents,
    opts: ExplorerOptions = {},
  ) {
    this.now = opts.now ?? (() => new Date());
    this.scheduleRender = debounce(
      () => this.requestRender(), opts.debounceMs ?? DEBOUNCE_MS);
  }

  // -- session ------------------------------------------------------------

  async open(hdr: Blob, name?: string): Promise<boolean> {
    let info: SessionInfo;
    try {
      info = await this.api.createSession(hdr, name);
    } catch (err) {
      this.events.onToast("could not open image: " + message(err));
      return false;
    }
    this.scheduleRender.cancel();
    this.seq += 1; // invalidate any in-flight render of the prior session
    this.pending = null;
    this.sessionId = info.session_id;
    this.dZ = info.d_z;
    this.z = new Array<number>(info.d_z).fill(0);
    this.gammaBase = null;
    this.gammaPost = null;
    this.lastRender = null;
    this.gallery = null;
    this.events.onSession({ sessionId: info.session_id, dZ: info.d_z });
    this.events.onSliders(this.z);
    this.events.onScores(null);
    this.events.onGallery(null);
    this.events.onPreview(this.api.previewUrl(info.preview_url));
    return true;
  }

  // -- sliders and gammas ---------------------------------------------------

  setSlider(dim: number, value: number): void {
    if (this.sessionId === null || dim < 0 || dim >= this.dZ) return;
    this.z[dim] = Math.min(SLIDER_MAX, Math.max(SLIDER_MIN, value));
    this.events.onSliders(this.z);
    this.scheduleRender();
  }

  setGammaBase(value: number | null): void {
    this.gammaBase = clampGamma(value, GAMMA_BASE_RANGE);
    if (this.sessionId !== null) this.scheduleRender();
  }

  setGammaPost(value: number | null): void {
    this.gammaPost = clampGamma(value, GAMMA_POST_RANGE);
    if (this.sessionId !== null) this.scheduleRender();
  }

  // -- render scheduling ----------------------------------------------------

  /** Bypass the debounce window (candidate clicks, imports). */
  renderNow(): void {
    this.scheduleRender.cancel();
    this.requestRender();
  }

  private snapshot(): RenderSnapshot {
    return {
      sessionId: this.sessionId as string,
      params: {
        z: this.z.slice(),
        gamma_base: this.gammaBase,
        gamma_post: this.gammaPost,
      },
    };
  }

  private requestRender(): void {
    if (this.sessionId === null) return;
    const snap = this.snapshot();
    if (this.inFlight) {
      this.pending = snap; // coalesce: only the newest state matters
      return;
    }
    this.issue(snap);
  }

  private issue(snap: RenderSnapshot): void {
    const id = ++this.seq;
    this.inFlight = true;
    this.emitBusy();
    this.api.render(snap.sessionId, snap.params).then(
      (res) => this.settle(id, res, null),
      (err: unknown) => this.settle(id, null, err),
    );
  }

  private settle(id: number, res: RenderResult | null, err: unknown): void {
    this.inFlight = false;
    if (this.pending !== null) {
      const next = this.pending;
      this.pending = null;
      this.issue(next); // bumps seq, so the settled response below is stale
    }
    if (id !== this.seq) return; // superseded: leave the UI unchanged
    if (res !== null) {
      this.lastRender = res;
      this.events.onPreview(this.api.previewUrl(res.preview_url));
      this.events.onScores({
        q: res.q, s: res.s, n: res.n,
        gammaBase: res.gamma_base, gammaPost: res.gamma_post,
      });
    } else {
      this.events.onToast("render failed: " + message(err));
    }
    this.emitBusy();
  }

  // -- optimize and the gallery ----------------------------------------------

  async optimize(starts = 4, iters = 30): Promise<void> {
    if (this.sessionId === null || this.optimizing) return;
    this.optimizing = true;
    this.emitBusy();
    try {
      const cands = await this.api.optimize(this.sessionId, starts, iters);
      this.gallery = cands; // delivered q-descending; order preserved
      this.events.onGallery(cands);
    } catch (err) {
      // prior gallery stays as-is
      this.events.onToast("optimize failed: " + message(err));
    } finally {
      this.optimizing = false;
      this.emitBusy();
    }
  }

  pickCandidate(index: number): void {
    if (this.gallery === null || index < 0 || index >= this.gallery.length) {
      return;
    }
    const cand = this.gallery[index];
    // Exact copy — candidate codes may sit outside the slider range and the
    // search found them at full float precision.
    this.z = cand.z.slice();
    this.gammaBase = null;
    this.gammaPost = null;
    this.events.onSliders(this.z);
    this.renderNow();
  }

  // -- export / import --------------------------------------------------------

  canExport(): boolean {
    return this.lastRender !== null && !this.inFlight && !this.optimizing;
  }

  exportSettings(): { basename: string; text: string } | null {
    if (!this.canExport() || this.sessionId === null) return null;
    return {
      basename: exportBasename(this.sessionId, this.now()),
      text: serializeSettings({
        z: this.z,
        gammaBase: this.gammaBase,
        gammaPost: this.gammaPost,
      }),
    };
  }

  exportPngUrl(): string | null {
    if (!this.canExport() || this.lastRender === null) return null;
    return this.api.previewUrl(this.lastRender.preview_url);
  }

  importSettings(text: string): boolean {
    if (this.sessionId === null) return false;
    try {
      const s = parseSettings(text, this.dZ);
      this.z = s.z.slice();
      this.gammaBase = s.gammaBase;
      this.gammaPost = s.gammaPost;
    } catch (err) {
      if (!(err instanceof SettingsError)) throw err;
      this.events.onToast("import failed: " + err.message);
      return false;
    }
    this.events.onSliders(this.z);
    this.renderNow();
    return true;
  }

  // -- inspection (hosts and tests) -------------------------------------------

  zValues(): readonly number[] {
    return this.z;
  }

  galleryEntries(): readonly Candidate[] | null {
    return this.gallery;
  }

  currentScores(): Scores | null {
    const r = this.lastRender;
    return r === null ? null : {
      q: r.q, s: r.s, n: r.n,
      gammaBase: r.gamma_base, gammaPost: r.gamma_post,
    };
  }

  private emitBusy(): void {
    this.events.onBusy(
      this.optimizing ? "optimize" : this.inFlight ? "render" : null);
  }
}

function clampGamma(value: number | null,
                    range: readonly [number, number]): number | null {
  if (value === null) return null;
  return Math.min(range[1], Math.max(range[0], value));
}
