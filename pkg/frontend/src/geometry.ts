// Selection geometry: drag rectangles to native-space square patches, and
// the 4-corner projective chart grid.
//
// Everything here works in native image pixels. Display zoom is undone at
// the entry points, so whatever the caller sends to the service is already
// integer native coordinates.

export interface Patch {
  x: number;
  y: number;
  size: number;
  label?: string;
}

export interface Drag {
  startX: number;
  startY: number;
  endX: number;
  endY: number;
}

const clamp = (v: number, lo: number, hi: number) =>
  Math.min(Math.max(v, lo), hi);

/**
 * Convert a pointer drag in display coordinates into a square patch in
 * native image space.
 *
 * The square's size follows the drag extent (the larger axis), snapped to
 * integers; the result is clamped so the whole patch stays inside the
 * image. Zoom only scales the display, so the same physical drag at any
 * zoom yields the same native patch.
 */
export function dragToPatch(
  drag: Drag,
  zoom: number,
  imageWidth: number,
  imageHeight: number,
): Patch {
  if (zoom <= 0 || !Number.isFinite(zoom)) {
    throw new Error(`zoom must be positive, got ${zoom}`);
  }
  const x0 = drag.startX / zoom;
  const y0 = drag.startY / zoom;
  const x1 = drag.endX / zoom;
  const y1 = drag.endY / zoom;

  let size = Math.round(Math.max(Math.abs(x1 - x0), Math.abs(y1 - y0)));
  size = Math.max(2, Math.min(size, imageWidth, imageHeight));
  const x = clamp(Math.round(Math.min(x0, x1)), 0, imageWidth - size);
  const y = clamp(Math.round(Math.min(y0, y1)), 0, imageHeight - size);
  return { x, y, size };
}

export function patchInBounds(
  patch: Patch,
  imageWidth: number,
  imageHeight: number,
): boolean {
  return (
    Number.isInteger(patch.x) &&
    Number.isInteger(patch.y) &&
    Number.isInteger(patch.size) &&
    patch.size >= 2 &&
    patch.x >= 0 &&
    patch.y >= 0 &&
    patch.x + patch.size <= imageWidth &&
    patch.y + patch.size <= imageHeight
  );
}

export type Point = [number, number];

/**
 * Homography mapping the unit square to the quad (corners in the order
 * top-left, top-right, bottom-right, bottom-left). Returned as the 9
 * row-major entries with h22 = 1.
 */
export function homographyFromCorners(corners: Point[]): number[] {
  if (corners.length !== 4) {
    throw new Error(`need 4 corners, got ${corners.length}`);
  }
  for (let i = 0; i < 4; i++) {
    const [ax, ay] = corners[i];
    const [bx, by] = corners[(i + 1) % 4];
    const [cx, cy] = corners[(i + 2) % 4];
    const area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    if (Math.abs(area) < 1e-9) {
      throw new Error("degenerate corner configuration");
    }
  }
  const src: Point[] = [
    [0, 0],
    [1, 0],
    [1, 1],
    [0, 1],
  ];
  const A: number[][] = [];
  const b: number[] = [];
  for (let i = 0; i < 4; i++) {
    const [u, v] = src[i];
    const [x, y] = corners[i];
    A.push([u, v, 1, 0, 0, 0, -x * u, -x * v]);
    b.push(x);
    A.push([0, 0, 0, u, v, 1, -y * u, -y * v]);
    b.push(y);
  }
  const h = solveLinear(A, b);
  return [...h, 1];
}

export function applyHomography(h: number[], u: number, v: number): Point {
  const w = h[6] * u + h[7] * v + h[8];
  if (Math.abs(w) < 1e-12) {
    throw new Error("degenerate corner configuration");
  }
  return [(h[0] * u + h[1] * v + h[2]) / w, (h[3] * u + h[4] * v + h[5]) / w];
}

/** Gaussian elimination with partial pivoting on a square system. */
function solveLinear(rows: number[][], rhs: number[]): number[] {
  const n = rhs.length;
  const A = rows.map((r) => r.slice());
  const b = rhs.slice();
  for (let i = 0; i < n; i++) {
    let pivot = i;
    for (let r = i + 1; r < n; r++) {
      if (Math.abs(A[r][i]) > Math.abs(A[pivot][i])) pivot = r;
    }
    if (Math.abs(A[pivot][i]) < 1e-12) {
      throw new Error("degenerate corner configuration");
    }
    if (pivot !== i) {
      [A[i], A[pivot]] = [A[pivot], A[i]];
      [b[i], b[pivot]] = [b[pivot], b[i]];
    }
    for (let r = i + 1; r < n; r++) {
      const f = A[r][i] / A[i][i];
      b[r] -= f * b[i];
      for (let c = i; c < n; c++) A[r][c] -= f * A[i][c];
    }
  }
  const x = new Array(n).fill(0);
  for (let i = n - 1; i >= 0; i--) {
    let acc = b[i];
    for (let c = i + 1; c < n; c++) acc -= A[i][c] * x[c];
    x[i] = acc / A[i][i];
  }
  return x;
}

export const CHART_ROWS = 4;
export const CHART_COLS = 6;

function chartLabel(index: number): string {
  const colored = CHART_ROWS * CHART_COLS - 6;
  return index < colored
    ? `C${String(index + 1).padStart(2, "0")}`
    : `N${index - colored + 1}`;
}

/**
 * Place the 24 chart sample windows from the four clicked corner-patch
 * centers (top-left, top-right, bottom-right, bottom-left).
 *
 * Patch centers are projectively interpolated on the 4x6 grid; each
 * window is a square of 40% of the local cell pitch centered on its grid
 * node, snapped to integer native coordinates. Row-major order matches
 * the chart's label layout.
 */
export function chartGridFromCorners(
  corners: Point[],
  imageWidth: number,
  imageHeight: number,
): Patch[] {
  const h = homographyFromCorners(corners);
  const centers: Point[][] = [];
  for (let r = 0; r < CHART_ROWS; r++) {
    const row: Point[] = [];
    for (let c = 0; c < CHART_COLS; c++) {
      row.push(applyHomography(h, c / (CHART_COLS - 1), r / (CHART_ROWS - 1)));
    }
    centers.push(row);
  }

  const dist = (a: Point, b: Point) => Math.hypot(a[0] - b[0], a[1] - b[1]);
  const patches: Patch[] = [];
  for (let r = 0; r < CHART_ROWS; r++) {
    for (let c = 0; c < CHART_COLS; c++) {
      const here = centers[r][c];
      const pitchH = dist(here, centers[r][c + 1 < CHART_COLS ? c + 1 : c - 1]);
      const pitchV = dist(here, centers[r + 1 < CHART_ROWS ? r + 1 : r - 1][c]);
      const size = Math.max(2, Math.round(0.4 * Math.min(pitchH, pitchV)));
      const patch: Patch = {
        x: clamp(Math.round(here[0] - size / 2), 0, imageWidth - size),
        y: clamp(Math.round(here[1] - size / 2), 0, imageHeight - size),
        size,
        label: chartLabel(r * CHART_COLS + c),
      };
      patches.push(patch);
    }
  }
  return patches;
}
