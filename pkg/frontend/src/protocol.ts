/**
 * Types for the editor service HTTP/JSON protocol.
 *
 * One session per server. Every mutation carries the revision it was
 * computed against; the server answers 409 when the session has moved
 * on, 422 when the geometry cannot be processed (empty mask, nothing
 * visible, refinement divergence), 400 for anything else invalid.
 * Angles are degrees on the wire.
 */

export interface Intrinsics {
  a_x: number;
  a_y: number;
  c_x: number;
  c_y: number;
  width: number;
  height: number;
}

export interface KeypointMeta {
  azimuth_deg: number;
  polar_deg: number;
  sigma_azimuth: number;
  sigma_polar: number;
  depth_cut: number | null;
  n_handles: number;
  n_rig_vertices: number;
}

export interface Meta {
  protocol_version: number;
  revision: number;
  model: { type: "splats" | "mesh"; primitives: number };
  intrinsics: Intrinsics | null;
  orbit_radius: number;
  orbit_target: [number, number, number];
  blend_mode: string;
  keypoints: KeypointMeta[];
}

/** Rig mesh as sent by the server: pixel-space vertices, triangle faces. */
export interface RigJson {
  rest_vertices: [number, number][];
  deformed_vertices: [number, number][];
  faces: [number, number, number][];
  boundary_edge_count: number[];
}

export interface KeypointRequest {
  revision: number;
  az: number;
  pol: number;
  radius: number;
  sigma_az?: number;
  sigma_pol?: number;
  depth_cut?: number | null;
}

export interface KeypointResponse {
  revision: number;
  index: number;
  rig: RigJson;
}

export interface HandlesRequest {
  revision: number;
  vertex_indices: number[];
  method?: "harmonic" | "bounded_biharmonic";
}

export interface HandlesResponse {
  revision: number;
  weights: number[][];
}

/** Per-handle 2x3 affine, row-major: [[a, b, tx], [c, d, ty]]. */
export type Affine2x3 = [[number, number, number], [number, number, number]];

export interface TransformsRequest {
  revision: number;
  transforms: Affine2x3[];
}

export interface TransformsResponse {
  revision: number;
  deformed_vertices: [number, number][];
  preview_png_b64: string;
}

export interface SigmasRequest {
  revision: number;
  sigma_az: number;
  sigma_pol: number;
}

export interface RevisionResponse {
  revision: number;
}

export interface SaveResponse {
  revision: number;
  path: string;
}

export const IDENTITY_AFFINE: Affine2x3 = [
  [1, 0, 0],
  [0, 1, 0],
];

/** Translation by (dx, dy) pixels as a 2x3 affine. */
export function translationAffine(dx: number, dy: number): Affine2x3 {
  return [
    [1, 0, dx],
    [0, 1, dy],
  ];
}

/**
 * Rotation by `angle` radians about a pivot point (the handle's rest
 * position, for modifier-drags).
 */
export function rotationAffine(angle: number, pivot: [number, number]): Affine2x3 {
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  const [px, py] = pivot;
  return [
    [c, -s, px - c * px + s * py],
    [s, c, py - s * px - c * py],
  ];
}

/** Apply a 2x3 affine to a point. */
export function applyAffine(t: Affine2x3, p: [number, number]): [number, number] {
  return [
    t[0][0] * p[0] + t[0][1] * p[1] + t[0][2],
    t[1][0] * p[0] + t[1][1] * p[1] + t[1][2],
  ];
}
