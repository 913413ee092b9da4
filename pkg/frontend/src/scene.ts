/** Reconstruction scene model and the orbit-camera projection used by the
 * canvas viewer. Pure math, no DOM. */

import { PointCloud } from "./api.js";
import { V3, cross3, dot3, norm3 } from "./gnomonic.js";

export interface Frustum {
  imageId: string;
  center: V3;
  theta: number;
}

export interface ScenePoint {
  id: number;
  p: V3;
  color: [number, number, number];
  observations: Record<string, [number, number]>;
}

export interface SceneModel {
  frusta: Frustum[];
  points: ScenePoint[];
}

export function buildScene(cloud: PointCloud): SceneModel {
  const frusta = cloud.cameras.map((cam) => ({
    imageId: cam.image_id,
    center: [cam.center[0], cam.center[1], cam.center[2]] as V3,
    theta: cam.theta,
  }));
  const points = cloud.points
    .filter((p) => p.accepted)
    .map((p) => ({
      id: p.track_id,
      p: [p.P[0], p.P[1], p.P[2]] as V3,
      color: [p.color[0], p.color[1], p.color[2]] as [number, number, number],
      observations: Object.fromEntries(
        Object.entries(p.observations).map(([k, v]) => [k, [v[0], v[1]] as [number, number]]),
      ),
    }));
  return { frusta, points };
}

export interface OrbitState {
  yaw: number;
  pitch: number;
  distance: number;
  target: V3;
}

/** Fit the orbit so the whole scene is comfortably inside the view. */
export function fitOrbit(model: SceneModel): OrbitState {
  const all: V3[] = [
    ...model.frusta.map((f) => f.center),
    ...model.points.map((p) => p.p),
  ];
  if (all.length === 0) {
    return { yaw: 0.6, pitch: 0.5, distance: 5, target: [0, 0, 0] };
  }
  const target: V3 = [0, 0, 0];
  for (const p of all) {
    target[0] += p[0] / all.length;
    target[1] += p[1] / all.length;
    target[2] += p[2] / all.length;
  }
  let radius = 0;
  for (const p of all) {
    radius = Math.max(
      radius,
      Math.hypot(p[0] - target[0], p[1] - target[1], p[2] - target[2]),
    );
  }
  return { yaw: 0.6, pitch: 0.5, distance: Math.max(radius * 2.5, 1e-3), target };
}

function orbitBasis(state: OrbitState): { eye: V3; right: V3; up: V3; forward: V3 } {
  const cp = Math.cos(state.pitch);
  const dir: V3 = [
    cp * Math.cos(state.yaw),
    cp * Math.sin(state.yaw),
    Math.sin(state.pitch),
  ];
  const eye: V3 = [
    state.target[0] + state.distance * dir[0],
    state.target[1] + state.distance * dir[1],
    state.target[2] + state.distance * dir[2],
  ];
  const forward = norm3([
    state.target[0] - eye[0],
    state.target[1] - eye[1],
    state.target[2] - eye[2],
  ]);
  const right = norm3(cross3(forward, [0, 0, 1]));
  const up = cross3(right, forward);
  return { eye, right, up, forward };
}

const ORBIT_FOCAL = 1.2; // screen heights per unit tan

/** Perspective-project a world point; null when behind the eye. Returns
 * canvas coordinates plus view-space depth for z-ordering. */
export function orbitProject(
  state: OrbitState,
  p: V3,
  w: number,
  h: number,
): [number, number, number] | null {
  const { eye, right, up, forward } = orbitBasis(state);
  const d: V3 = [p[0] - eye[0], p[1] - eye[1], p[2] - eye[2]];
  const z = dot3(d, forward);
  if (z <= 1e-9) return null;
  const x = dot3(d, right) / z;
  const y = dot3(d, up) / z;
  return [w / 2 + x * ORBIT_FOCAL * h, h / 2 - y * ORBIT_FOCAL * h, z];
}

/** Wireframe segments of a camera marker: a small square-based pyramid whose
 * apex is at the camera center and whose axis follows the camera's forward
 * direction (yaw about +Z, looking along its local +X). */
export function frustumSegments(f: Frustum, scale: number): [V3, V3][] {
  const c = Math.cos(-f.theta);
  const s = Math.sin(-f.theta);
  const rot = (v: V3): V3 => [
    c * v[0] - s * v[1],
    s * v[0] + c * v[1],
    v[2],
  ];
  const apex = f.center;
  const corners: V3[] = [
    [1, 0.6, 0.45],
    [1, -0.6, 0.45],
    [1, -0.6, -0.45],
    [1, 0.6, -0.45],
  ].map((v) => {
    const r = rot([v[0] * scale, v[1] * scale, v[2] * scale] as V3);
    return [apex[0] + r[0], apex[1] + r[1], apex[2] + r[2]] as V3;
  });
  const segments: [V3, V3][] = corners.map((corner) => [apex, corner]);
  for (let i = 0; i < 4; i++) {
    segments.push([corners[i], corners[(i + 1) % 4]]);
  }
  return segments;
}

/** Nearest projected point within `radius` canvas pixels of (x, y). */
export function pickPoint(
  model: SceneModel,
  state: OrbitState,
  x: number,
  y: number,
  w: number,
  h: number,
  radius: number = 8,
): ScenePoint | null {
  let best: ScenePoint | null = null;
  let bestDist = radius;
  for (const point of model.points) {
    const proj = orbitProject(state, point.p, w, h);
    if (!proj) continue;
    const dist = Math.hypot(proj[0] - x, proj[1] - y);
    if (dist < bestDist) {
      bestDist = dist;
      best = point;
    }
  }
  return best;
}
