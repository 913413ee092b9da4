/** Gnomonic (rectilinear) reprojection of an equirectangular panorama and
 * the shared sphere conventions: theta = 2*pi*x/width (longitude),
 * phi = pi*y/height (colatitude, 0 at the top pole, +Z). */

export type V3 = [number, number, number];

export interface ViewState {
  yaw: number; // longitude of the view center, radians
  pitch: number; // elevation above the equator, radians
  fov: number; // vertical field of view, radians
}

export const FOV_MIN = (10 * Math.PI) / 180;
export const FOV_MAX = (120 * Math.PI) / 180;
const PITCH_LIMIT = Math.PI / 2 - 1e-4;

export function clampView(view: ViewState): ViewState {
  return {
    yaw: ((view.yaw % (2 * Math.PI)) + 2 * Math.PI) % (2 * Math.PI),
    pitch: Math.max(-PITCH_LIMIT, Math.min(PITCH_LIMIT, view.pitch)),
    fov: Math.max(FOV_MIN, Math.min(FOV_MAX, view.fov)),
  };
}

export function bearingFromAngles(theta: number, phi: number): V3 {
  const s = Math.sin(phi);
  return [s * Math.cos(theta), s * Math.sin(theta), Math.cos(phi)];
}

export function pixelToBearing(
  x: number,
  y: number,
  width: number,
  height: number,
): V3 {
  return bearingFromAngles((2 * Math.PI * x) / width, (Math.PI * y) / height);
}

export function bearingToPixel(
  b: V3,
  width: number,
  height: number,
): [number, number] {
  let theta = Math.atan2(b[1], b[0]);
  if (theta < 0) theta += 2 * Math.PI;
  const phi = Math.acos(Math.max(-1, Math.min(1, b[2])));
  return [(theta * width) / (2 * Math.PI), (phi * height) / Math.PI];
}

export interface ViewBasis {
  forward: V3;
  right: V3;
  up: V3;
}

export function viewBasis(view: ViewState): ViewBasis {
  const v = clampView(view);
  const forward = bearingFromAngles(v.yaw, Math.PI / 2 - v.pitch);
  // World up is +Z; pitch is clamped away from the poles so this is stable.
  const right = norm3(cross3(forward, [0, 0, 1]));
  const up = cross3(right, forward);
  return { forward, right, up };
}

/** Bearing of the continuous view-plane position (u, v); (w/2, h/2) maps to
 * the view direction exactly. */
export function viewRayToBearing(
  view: ViewState,
  u: number,
  v: number,
  w: number,
  h: number,
): V3 {
  const { forward, right, up } = viewBasis(view);
  const t = Math.tan(clampView(view).fov / 2);
  const ndcX = ((2 * u) / w - 1) * t * (w / h);
  const ndcY = ((2 * v) / h - 1) * t;
  return norm3([
    forward[0] + ndcX * right[0] - ndcY * up[0],
    forward[1] + ndcX * right[1] - ndcY * up[1],
    forward[2] + ndcX * right[2] - ndcY * up[2],
  ]);
}

/** Mouse-drag look: one output-pixel drag rotates by the per-pixel angle. */
export function dragLook(
  view: ViewState,
  dx: number,
  dy: number,
  w: number,
  h: number,
): ViewState {
  const clamped = clampView(view);
  const perPixel = clamped.fov / h;
  return clampView({
    yaw: clamped.yaw - dx * perPixel,
    pitch: clamped.pitch + dy * perPixel,
    fov: clamped.fov,
  });
}

export interface RasterLike {
  width: number;
  height: number;
  data: Uint8ClampedArray; // RGBA
}

/** Render the panorama into `out` through the view; pure pixel loop so it is
 * testable without a DOM. Bilinear sampling with horizontal wrap. */
export function renderGnomonic(
  src: RasterLike,
  view: ViewState,
  out: RasterLike,
): void {
  const { width: sw, height: sh, data: sd } = src;
  const { width: ow, height: oh, data: od } = out;
  const { forward, right, up } = viewBasis(view);
  const t = Math.tan(clampView(view).fov / 2);
  const aspect = ow / oh;

  let offset = 0;
  for (let j = 0; j < oh; j++) {
    const ndcY = ((2 * (j + 0.5)) / oh - 1) * t;
    for (let i = 0; i < ow; i++) {
      const ndcX = ((2 * (i + 0.5)) / ow - 1) * t * aspect;
      const dx = forward[0] + ndcX * right[0] - ndcY * up[0];
      const dy = forward[1] + ndcX * right[1] - ndcY * up[1];
      const dz = forward[2] + ndcX * right[2] - ndcY * up[2];
      const n = Math.hypot(dx, dy, dz);

      let theta = Math.atan2(dy / n, dx / n);
      if (theta < 0) theta += 2 * Math.PI;
      const phi = Math.acos(Math.max(-1, Math.min(1, dz / n)));

      // Sample position in array coordinates (integer = pixel center).
      const x = (theta * sw) / (2 * Math.PI) - 0.5;
      const y = (phi * sh) / Math.PI - 0.5;
      const x0 = Math.floor(x);
      const fx = x - x0;
      const xa = ((x0 % sw) + sw) % sw;
      const xb = (xa + 1) % sw;
      const yc = Math.max(0, Math.min(sh - 1, y));
      const y0 = Math.floor(yc);
      const fy = yc - y0;
      const y1 = Math.min(y0 + 1, sh - 1);

      const i00 = (y0 * sw + xa) * 4;
      const i01 = (y0 * sw + xb) * 4;
      const i10 = (y1 * sw + xa) * 4;
      const i11 = (y1 * sw + xb) * 4;
      for (let c = 0; c < 3; c++) {
        const top = sd[i00 + c] * (1 - fx) + sd[i01 + c] * fx;
        const bot = sd[i10 + c] * (1 - fx) + sd[i11 + c] * fx;
        od[offset + c] = top * (1 - fy) + bot * fy;
      }
      od[offset + 3] = 255;
      offset += 4;
    }
  }
}

export function cross3(a: V3, b: V3): V3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm3(a: V3): V3 {
  const n = Math.hypot(a[0], a[1], a[2]);
  return [a[0] / n, a[1] / n, a[2] / n];
}

export function dot3(a: V3, b: V3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
