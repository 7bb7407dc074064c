/** Client-side session state and the actions the view can perform.
 *
 * Mirrors the server's concurrency contract: at most one in-flight
 * mutation, everything else is reads.  A 409 moves the UI into a
 * "busy" phase that disables mutating controls and offers a retry of
 * the rejected action; a 404 moves it into a terminal "expired" phase.
 * All displayed numbers (previews, ranges, metrics, revisions) come
 * from server responses — the client never computes depth statistics.
 */

import { ServiceBusyError, SessionExpiredError } from "./api.js";
import { bytesFromBase64 } from "./depth.js";
import { rectFromDrag, type DragRect } from "./rect.js";
import type {
  ModeResponse,
  NextBody,
  NextResponse,
  Rect,
  SelectResponse,
  SessionInfo,
  VarianceResponse,
} from "./types.js";

/** The slice of the HTTP client the controller needs; satisfied by
 * ApiClient and by test fakes. */
export interface SessionApi {
  getSession(id: string): Promise<SessionInfo>;
  getMode(id: string, index: number): Promise<ModeResponse>;
  requestNext(id: string, body: NextBody): Promise<NextResponse>;
  select(id: string, mode: number): Promise<SelectResponse>;
  getVariance(id: string): Promise<VarianceResponse>;
}

export type Phase =
  | "loading"
  | "idle"
  | "solving"
  | "busy"
  | "expired"
  | "error";

export interface ModeEntry {
  index: number;
  provenance: string;
  payload: Uint8Array;
  preview: number[][];
}

export interface VarianceEntry {
  payload: Uint8Array;
  preview: number[][];
  lo: number;
  hi: number;
}

export interface ViewState {
  sessionId: string;
  info: SessionInfo | null;
  modes: ModeEntry[];
  /** index of the mode shown large / receiving annotations */
  active: number;
  /** rectangles drawn but not yet submitted */
  pending: Rect[];
  /** diversity weight for the next request; server default when unset */
  lambda: number | undefined;
  showVariance: boolean;
  variance: VarianceEntry | null;
  /** shared colormap depth range for the whole session (the first
   * estimate's), as reported by the server */
  range: { lo: number; hi: number } | null;
  phase: Phase;
  metrics: Record<string, number> | null;
  error: string | null;
}

type Mutation = { kind: "next" } | { kind: "select"; mode: number };

export interface ControllerOptions {
  /** poll interval while a solve is in flight, milliseconds */
  pollMs?: number;
  /** injectable for tests */
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) =>
  new Promise<void>((resolve) => setTimeout(resolve, ms));

export class SessionController {
  private readonly pollMs: number;
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly listeners = new Set<(s: ViewState) => void>();
  private mutationInFlight = false;
  private pendingRetry: Mutation | null = null;
  private stateInternal: ViewState;

  private constructor(
    private readonly api: SessionApi,
    sessionId: string,
    opts: ControllerOptions,
  ) {
    this.pollMs = opts.pollMs ?? 300;
    this.sleep = opts.sleep ?? defaultSleep;
    this.stateInternal = {
      sessionId,
      info: null,
      modes: [],
      active: 0,
      pending: [],
      lambda: undefined,
      showVariance: false,
      variance: null,
      range: null,
      phase: "loading",
      metrics: null,
      error: null,
    };
  }

  /** Connect to an existing session and fetch everything it has. */
  static async open(
    api: SessionApi,
    sessionId: string,
    opts: ControllerOptions = {},
  ): Promise<SessionController> {
    const controller = new SessionController(api, sessionId, opts);
    await controller.load();
    return controller;
  }

  get state(): Readonly<ViewState> {
    return this.stateInternal;
  }

  subscribe(listener: (s: ViewState) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private update(patch: Partial<ViewState>): void {
    this.stateInternal = { ...this.stateInternal, ...patch };
    for (const listener of this.listeners) listener(this.stateInternal);
  }

  private async load(): Promise<void> {
    try {
      let info = await this.api.getSession(this.stateInternal.sessionId);
      while (info.status === "solving") {
        await this.sleep(this.pollMs);
        info = await this.api.getSession(this.stateInternal.sessionId);
      }
      const modes: ModeEntry[] = [];
      let range: { lo: number; hi: number } | null = null;
      for (let i = 0; i < info.mode_count; i++) {
        const mode = await this.api.getMode(this.stateInternal.sessionId, i);
        if (i === 0) range = { lo: mode.lo, hi: mode.hi };
        modes.push({
          index: mode.index,
          provenance: mode.provenance,
          payload: bytesFromBase64(mode.payload),
          preview: mode.preview,
        });
      }
      this.update({
        info,
        modes,
        active: info.selected ?? 0,
        range,
        phase: "idle",
      });
    } catch (err) {
      this.fail(err);
    }
  }

  private async fetchMode(index: number): Promise<ModeEntry> {
    const mode = await this.api.getMode(this.stateInternal.sessionId, index);
    return {
      index: mode.index,
      provenance: mode.provenance,
      payload: bytesFromBase64(mode.payload),
      preview: mode.preview,
    };
  }

  private fail(err: unknown): void {
    if (err instanceof SessionExpiredError) {
      this.update({ phase: "expired", error: err.message });
    } else {
      this.update({
        phase: "error",
        error: err instanceof Error ? err.message : String(err),
      });
    }
  }

  // ------------------------------------------------------- annotations

  /** Normalize and clamp a drag on the active mode; rejects drags that
   * fall entirely outside the image.  Returns whether a rectangle was
   * added. */
  addDrag(drag: DragRect): boolean {
    const info = this.stateInternal.info;
    if (!info) return false;
    const rect = rectFromDrag(
      drag,
      this.stateInternal.active,
      info.width,
      info.height,
    );
    if (rect === null) return false;
    this.update({ pending: [...this.stateInternal.pending, rect] });
    return true;
  }

  removeRect(index: number): void {
    const pending = this.stateInternal.pending.filter((_, i) => i !== index);
    this.update({ pending });
  }

  clearRects(): void {
    this.update({ pending: [] });
  }

  setActive(index: number): void {
    if (index >= 0 && index < this.stateInternal.modes.length) {
      this.update({ active: index });
    }
  }

  setLambda(value: number | undefined): void {
    this.update({ lambda: value });
  }

  // ------------------------------------------------------- mutations

  /** Submit pending annotations and request one more mode.  Polls the
   * session until the solve finishes, then appends the new mode. */
  async requestNext(): Promise<boolean> {
    if (this.mutationInFlight || this.stateInternal.phase !== "idle") {
      return false;
    }
    this.mutationInFlight = true;
    this.update({ phase: "solving", error: null });
    try {
      await this.api.requestNext(this.stateInternal.sessionId, {
        lambda: this.stateInternal.lambda,
        annotations: this.stateInternal.pending,
      });
      this.update({ pending: [] }); // accepted by the server
      const info = await this.pollUntilIdle();
      if (info.mode_count > this.stateInternal.modes.length) {
        const mode = await this.fetchMode(info.mode_count - 1);
        this.update({
          info,
          modes: [...this.stateInternal.modes, mode],
          active: mode.index,
          phase: "idle",
        });
      } else {
        this.update({
          info,
          phase: "idle",
          error: info.last_error ?? "solve produced no mode",
        });
      }
      return true;
    } catch (err) {
      this.failMutation(err, { kind: "next" });
      return false;
    } finally {
      this.mutationInFlight = false;
    }
  }

  /** Commit the final choice; stores returned metrics when the session
   * has ground truth. */
  async select(mode: number): Promise<boolean> {
    if (this.mutationInFlight || this.stateInternal.phase !== "idle") {
      return false;
    }
    this.mutationInFlight = true;
    try {
      const res = await this.api.select(this.stateInternal.sessionId, mode);
      const info = await this.api.getSession(this.stateInternal.sessionId);
      this.update({ info, metrics: res.metrics, phase: "idle", error: null });
      return true;
    } catch (err) {
      this.failMutation(err, { kind: "select", mode });
      return false;
    } finally {
      this.mutationInFlight = false;
    }
  }

  /** Re-attempt the mutation that was rejected with 409. */
  async retry(): Promise<boolean> {
    if (this.stateInternal.phase !== "busy" || this.pendingRetry === null) {
      return false;
    }
    const mutation = this.pendingRetry;
    this.pendingRetry = null;
    this.update({ phase: "idle", error: null });
    return mutation.kind === "next"
      ? this.requestNext()
      : this.select(mutation.mode);
  }

  async toggleVariance(): Promise<void> {
    const show = !this.stateInternal.showVariance;
    if (show && this.stateInternal.variance === null) {
      try {
        const v = await this.api.getVariance(this.stateInternal.sessionId);
        this.update({
          variance: {
            payload: bytesFromBase64(v.payload),
            preview: v.preview,
            lo: v.lo,
            hi: v.hi,
          },
        });
      } catch (err) {
        this.fail(err);
        return;
      }
    }
    this.update({ showVariance: show });
  }

  /** Re-read session info (e.g. after an external change). */
  async refresh(): Promise<void> {
    try {
      const info = await this.api.getSession(this.stateInternal.sessionId);
      const modes = [...this.stateInternal.modes];
      while (modes.length < info.mode_count) {
        modes.push(await this.fetchMode(modes.length));
      }
      this.update({ info, modes });
    } catch (err) {
      this.fail(err);
    }
  }

  private async pollUntilIdle(): Promise<SessionInfo> {
    for (;;) {
      const info = await this.api.getSession(this.stateInternal.sessionId);
      if (info.status !== "solving") return info;
      await this.sleep(this.pollMs);
    }
  }

  private failMutation(err: unknown, mutation: Mutation): void {
    if (err instanceof ServiceBusyError) {
      this.pendingRetry = mutation;
      this.update({ phase: "busy", error: err.message });
    } else {
      this.fail(err);
    }
  }
}
