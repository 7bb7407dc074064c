/** JSON shapes of the pmdepth session service. */

/** Annotation rectangle on one mode; (x, y) is the top-left corner in
 * (column, row) order, w columns wide, h rows tall. */
export interface Rect {
  mode: number;
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface CreateSessionBody {
  samples_path?: string;
  scene_spec?: Record<string, unknown>;
  sampler_cfg?: Record<string, unknown>;
  patch?: number;
  stride?: number;
  n_samples?: number;
  seed?: number;
  solver?: Record<string, unknown>;
}

export interface CreateResponse {
  id: string;
  revision: number;
  status: string;
  mode_count: number;
}

export interface SessionInfo {
  id: string;
  revision: number;
  status: string;
  mode_count: number;
  height: number;
  width: number;
  has_ground_truth: boolean;
  selected: number | null;
  annotated_modes: number[];
  last_error: string | null;
}

export interface ModeResponse {
  revision: number;
  index: number;
  provenance: string;
  /** base64 of the depth-map byte format */
  payload: string;
  /** 8-bit preview rows, already normalized to the session depth range */
  preview: number[][];
  lo: number;
  hi: number;
}

export interface NextBody {
  lambda?: number;
  annotations: Rect[];
}

export interface NextResponse {
  revision: number;
  status: string;
  generating_index: number;
}

export interface SelectResponse {
  revision: number;
  selected: number;
  metrics: Record<string, number> | null;
}

export interface VarianceResponse {
  revision: number;
  payload: string;
  preview: number[][];
  lo: number;
  hi: number;
}
