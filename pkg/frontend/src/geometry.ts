/** Small 2D helpers shared by overlay rendering and tests. */

export function pointSegmentDistance(
  px: number,
  py: number,
  ax: number,
  ay: number,
  bx: number,
  by: number,
): number {
  const vx = bx - ax;
  const vy = by - ay;
  const len2 = vx * vx + vy * vy;
  let t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0;
  t = Math.max(0, Math.min(1, t));
  return Math.hypot(px - (ax + t * vx), py - (ay + t * vy));
}

/** Minimum distance from (x, y) to a set of polyline segments, as returned
 * by the epipolar-curve endpoint. */
export function polylineDistance(
  segments: number[][][],
  x: number,
  y: number,
): number {
  let best = Infinity;
  for (const segment of segments) {
    for (let i = 0; i + 1 < segment.length; i++) {
      best = Math.min(
        best,
        pointSegmentDistance(
          x, y,
          segment[i][0], segment[i][1],
          segment[i + 1][0], segment[i + 1][1],
        ),
      );
    }
    if (segment.length === 1) {
      best = Math.min(best, Math.hypot(segment[0][0] - x, segment[0][1] - y));
    }
  }
  return best;
}
