import { describe, expect, it } from "vitest";

import { PointCloud } from "../src/api.js";
import {
  buildScene,
  fitOrbit,
  frustumSegments,
  orbitProject,
  pickPoint,
} from "../src/scene.js";
import { polylineDistance, pointSegmentDistance } from "../src/geometry.js";

function sampleCloud(): PointCloud {
  return {
    cameras: [
      { image_id: "cam1", theta: 0, center: [0, 0, 0] },
      { image_id: "cam2", theta: 0.4, center: [1, 0, 0] },
    ],
    points: [
      {
        track_id: 0,
        P: [1, 2, 0.5],
        color: [10, 20, 30],
        accepted: true,
        rms_residual: 0,
        observations: { cam1: [5, 6], cam2: [7, 8] },
      },
      {
        track_id: 1,
        P: [9, 9, 9],
        color: [0, 0, 0],
        accepted: false,
        rms_residual: 1,
        observations: { cam1: [1, 1], cam2: [2, 2] },
      },
    ],
  };
}

describe("buildScene", () => {
  it("keeps accepted points and all cameras", () => {
    const model = buildScene(sampleCloud());
    expect(model.frusta).toHaveLength(2);
    expect(model.points).toHaveLength(1);
    expect(model.points[0].observations.cam1).toEqual([5, 6]);
  });
});

describe("empty scene", () => {
  it("fitOrbit yields a usable default for an empty model", () => {
    const orbit = fitOrbit({ frusta: [], points: [] });
    expect(orbit.distance).toBeGreaterThan(0);
    expect(orbitProject(orbit, orbit.target, 640, 480)).not.toBeNull();
  });
});

describe("orbit projection", () => {
  it("projects the orbit target to the canvas center", () => {
    const model = buildScene(sampleCloud());
    const orbit = fitOrbit(model);
    const proj = orbitProject(orbit, orbit.target, 640, 480);
    expect(proj).not.toBeNull();
    expect(proj![0]).toBeCloseTo(320, 6);
    expect(proj![1]).toBeCloseTo(240, 6);
  });

  it("returns null behind the eye", () => {
    const orbit = { yaw: 0, pitch: 0, distance: 2, target: [0, 0, 0] as [number, number, number] };
    // The eye sits at distance 2 along +X; a point far beyond it is behind.
    expect(orbitProject(orbit, [5, 0, 0], 100, 100)).toBeNull();
  });

  it("keeps every fitted scene point in front of the eye", () => {
    const model = buildScene(sampleCloud());
    const orbit = fitOrbit(model);
    for (const p of model.points) {
      expect(orbitProject(orbit, p.p, 800, 600)).not.toBeNull();
    }
  });
});

describe("frustum markers", () => {
  it("emits 8 segments anchored at the camera center", () => {
    const segments = frustumSegments(
      { imageId: "cam1", center: [1, 2, 0], theta: 0.3 },
      0.5,
    );
    expect(segments).toHaveLength(8);
    for (let i = 0; i < 4; i++) {
      expect(segments[i][0]).toEqual([1, 2, 0]);
    }
  });
});

describe("picking", () => {
  it("finds the point nearest to a click", () => {
    const model = buildScene(sampleCloud());
    const orbit = fitOrbit(model);
    const proj = orbitProject(orbit, model.points[0].p, 640, 480)!;
    const hit = pickPoint(model, orbit, proj[0] + 2, proj[1] - 2, 640, 480);
    expect(hit?.id).toBe(0);
    expect(pickPoint(model, orbit, proj[0] + 200, proj[1], 640, 480)).toBeNull();
  });
});

describe("geometry helpers", () => {
  it("computes point-segment distance", () => {
    expect(pointSegmentDistance(0, 1, -1, 0, 1, 0)).toBeCloseTo(1, 12);
    expect(pointSegmentDistance(3, 0, -1, 0, 1, 0)).toBeCloseTo(2, 12);
  });

  it("computes polyline distance over segments", () => {
    const segments = [
      [
        [0, 0],
        [10, 0],
      ],
      [
        [20, 5],
        [30, 5],
      ],
    ];
    expect(polylineDistance(segments, 5, 3)).toBeCloseTo(3, 12);
    expect(polylineDistance(segments, 25, 4)).toBeCloseTo(1, 12);
  });
});
