/**
 * Rig-mesh overlay: hit-testing, handle drag/rotate gestures, and
 * canvas drawing over the keypoint-view preview.
 *
 * Geometry state mirrors the server: rest vertices never change, the
 * deformed vertices shown are always the latest server-confirmed ones
 * (the optimistic echo during a drag is drawn separately and discarded
 * on ack). Dragging a handle by (dx, dy) px emits a translation affine
 * with exactly that offset composed onto the handle's transform at
 * drag start; modifier-dragging rotates about the handle's rest
 * position instead.
 */

import type { Affine2x3, RigJson } from "./protocol.js";
import { applyAffine, IDENTITY_AFFINE, rotationAffine } from "./protocol.js";

export const HIT_RADIUS_PX = 6;
/** Transform updates during a drag are throttled to this rate. */
export const DRAG_UPDATE_HZ = 30;

/**
 * Index of the vertex within `radius` px of (x, y), or -1. Ties go to
 * the nearest vertex; exact distance ties to the lowest index.
 */
export function hitTestVertex(
  vertices: ReadonlyArray<readonly [number, number]>,
  x: number,
  y: number,
  radius = HIT_RADIUS_PX,
): number {
  let best = -1;
  let bestD2 = radius * radius;
  for (let i = 0; i < vertices.length; i++) {
    const dx = vertices[i][0] - x;
    const dy = vertices[i][1] - y;
    const d2 = dx * dx + dy * dy;
    if (d2 < bestD2 || (d2 === bestD2 && best === -1)) {
      best = i;
      bestD2 = d2;
    }
  }
  return best;
}

/** Compose two 2x3 affines: result maps p -> a(b(p)). */
export function composeAffine(a: Affine2x3, b: Affine2x3): Affine2x3 {
  const r: Affine2x3 = [
    [0, 0, 0],
    [0, 0, 0],
  ];
  for (let i = 0; i < 2; i++) {
    for (let j = 0; j < 2; j++) {
      r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
    }
    r[i][2] = a[i][0] * b[0][2] + a[i][1] * b[1][2] + a[i][2];
  }
  return r;
}

export interface DragState {
  handleIndex: number;
  startX: number;
  startY: number;
  /** The handle's transform when the drag began. */
  baseTransform: Affine2x3;
  /** Rest position of the dragged handle (rotation pivot). */
  restPosition: [number, number];
  rotate: boolean;
}

/**
 * Transform for the dragged handle at pointer (x, y).
 *
 * Plain drag: translation by the pointer delta, composed onto the
 * transform at drag start, so the handle lands exactly (dx, dy) px
 * from where it was grabbed. Modifier drag: rotation about the rest
 * position by the angle swept by the pointer around it.
 */
export function dragTransform(drag: DragState, x: number, y: number): Affine2x3 {
  if (!drag.rotate) {
    const t: Affine2x3 = [
      [drag.baseTransform[0][0], drag.baseTransform[0][1], drag.baseTransform[0][2]],
      [drag.baseTransform[1][0], drag.baseTransform[1][1], drag.baseTransform[1][2]],
    ];
    t[0][2] += x - drag.startX;
    t[1][2] += y - drag.startY;
    return t;
  }
  const [px, py] = drag.restPosition;
  const a0 = Math.atan2(drag.startY - py, drag.startX - px);
  const a1 = Math.atan2(y - py, x - px);
  return composeAffine(rotationAffine(a1 - a0, drag.restPosition), drag.baseTransform);
}

/**
 * Trailing-edge throttle: the first call fires immediately, later
 * calls within the interval collapse to one trailing call with the
 * latest arguments. Guarantees the emit rate never exceeds `hz`.
 */
export class Throttle<A extends unknown[]> {
  private last = -Infinity;
  private pending: A | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly fn: (...args: A) => void,
    private readonly hz = DRAG_UPDATE_HZ,
    private readonly now: () => number = () => Date.now(),
  ) {}

  call(...args: A): void {
    const interval = 1000 / this.hz;
    const t = this.now();
    if (t - this.last >= interval && this.timer === null) {
      this.last = t;
      this.fn(...args);
      return;
    }
    this.pending = args;
    if (this.timer === null) {
      const wait = Math.max(0, interval - (t - this.last));
      this.timer = setTimeout(() => {
        this.timer = null;
        if (this.pending !== null) {
          const p = this.pending;
          this.pending = null;
          this.last = this.now();
          this.fn(...p);
        }
      }, wait);
    }
  }

  /** Drop any queued trailing call (drag cancelled). */
  cancel(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    this.pending = null;
  }

  /** Fire any queued trailing call right now (drag released). */
  flush(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    if (this.pending !== null) {
      const p = this.pending;
      this.pending = null;
      this.last = this.now();
      this.fn(...p);
    }
  }
}

/** Per-keypoint overlay state the app keeps between server acks. */
export class RigOverlay {
  rig: RigJson;
  handleIndices: number[] = [];
  transforms: Affine2x3[] = [];

  constructor(rig: RigJson) {
    this.rig = rig;
  }

  setHandles(indices: number[]): void {
    this.handleIndices = [...indices];
    this.transforms = indices.map(() => [
      [...IDENTITY_AFFINE[0]],
      [...IDENTITY_AFFINE[1]],
    ]) as Affine2x3[];
  }

  /** Server-confirmed deformed positions replace any optimistic echo. */
  ackDeformed(vertices: [number, number][]): void {
    this.rig = { ...this.rig, deformed_vertices: vertices };
  }

  /** Current screen position of handle h (its transformed rest position). */
  handlePosition(h: number): [number, number] {
    const rest = this.rig.rest_vertices[this.handleIndices[h]];
    return applyAffine(this.transforms[h], rest);
  }

  hitHandle(x: number, y: number, radius = HIT_RADIUS_PX): number {
    const pos = this.handleIndices.map((_, h) => this.handlePosition(h));
    return hitTestVertex(pos, x, y, radius);
  }

  hitVertex(x: number, y: number, radius = HIT_RADIUS_PX): number {
    return hitTestVertex(this.rig.deformed_vertices, x, y, radius);
  }
}

/** Minimal 2D context surface the drawer needs (testable off-DOM). */
export interface DrawContext {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  clearRect(x: number, y: number, w: number, h: number): void;
}

export function drawOverlay(
  ctx: DrawContext,
  overlay: RigOverlay,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  const v = overlay.rig.deformed_vertices;

  ctx.strokeStyle = "rgba(90, 200, 90, 0.7)";
  ctx.lineWidth = 1;
  ctx.beginPath();
  for (const [a, b, c] of overlay.rig.faces) {
    ctx.moveTo(v[a][0], v[a][1]);
    ctx.lineTo(v[b][0], v[b][1]);
    ctx.lineTo(v[c][0], v[c][1]);
    ctx.lineTo(v[a][0], v[a][1]);
  }
  ctx.stroke();

  ctx.fillStyle = "rgba(255, 160, 40, 0.95)";
  for (let h = 0; h < overlay.handleIndices.length; h++) {
    const [x, y] = overlay.handlePosition(h);
    ctx.beginPath();
    ctx.arc(x, y, HIT_RADIUS_PX - 1, 0, 2 * Math.PI);
    ctx.fill();
  }
}
