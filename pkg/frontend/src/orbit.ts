/**
 * Free-view orbit state for the preview panes.
 *
 * Azimuth wraps to [0, 360) degrees, polar clamps to (0, 180) so the
 * camera never crosses the poles. Pointer drags map 1 px to 0.5 deg.
 */

export const DEG_PER_PX = 0.5;
const POLAR_EPS = 0.5;

export class OrbitState {
  constructor(
    public azimuthDeg = 0,
    public polarDeg = 90,
  ) {}

  rotate(dxPx: number, dyPx: number): void {
    this.azimuthDeg = wrapAzimuth(this.azimuthDeg + dxPx * DEG_PER_PX);
    this.polarDeg = clampPolar(this.polarDeg + dyPx * DEG_PER_PX);
  }

  set(azimuthDeg: number, polarDeg: number): void {
    this.azimuthDeg = wrapAzimuth(azimuthDeg);
    this.polarDeg = clampPolar(polarDeg);
  }
}

export function wrapAzimuth(deg: number): number {
  const w = deg % 360;
  return w < 0 ? w + 360 : w;
}

export function clampPolar(deg: number): number {
  return Math.min(180 - POLAR_EPS, Math.max(POLAR_EPS, deg));
}
