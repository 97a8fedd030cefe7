// Annotation session state: one pair loaded at a time, a pending patch
// per image side, and the committed chart/region sets mirrored from the
// service. Mutations are optimistic; any server rejection restores the
// exact prior state (the pending selections included, so a rejected patch
// stays available for adjustment).

import {
  chartGridFromCorners,
  dragToPatch,
  patchInBounds,
  type Drag,
  type Patch,
  type Point,
} from "./geometry.js";
import {
  type AnnotationClient,
  type FitOut,
  type MutationOut,
  type PairDetail,
  type RegionPair,
  ServiceError,
} from "./client.js";
import { homogeneityPreview } from "./homogeneity.js";

// the polynomial fit needs this many correspondences to have full rank
export const MIN_SAMPLES = 11;

export type Side = "a" | "b";

export interface ImageSize {
  width: number;
  height: number;
}

export interface SelectionState {
  pairId: string;
  sizeA: ImageSize;
  sizeB: ImageSize;
  pendingA: Patch | null;
  pendingB: Patch | null;
  chartA: Patch[];
  chartB: Patch[];
  regions: RegionPair[];
  nSamples: number;
  status: string;
  lastFit: FitOut | null;
  residualIncreased: boolean;
}

export interface MutationResult {
  ok: boolean;
  error?: string;
}

export function createState(
  detail: PairDetail,
  sizeA: ImageSize,
  sizeB: ImageSize,
): SelectionState {
  return {
    pairId: detail.pair_id,
    sizeA,
    sizeB,
    pendingA: null,
    pendingB: null,
    chartA: detail.record.chart_a.slice(),
    chartB: detail.record.chart_b.slice(),
    regions: detail.record.regions.slice(),
    nSamples: detail.record.n_samples,
    status: detail.record.status,
    lastFit: detail.fit,
    residualIncreased: false,
  };
}

const sideSize = (state: SelectionState, side: Side) =>
  side === "a" ? state.sizeA : state.sizeB;

/** Drag selection on one image; the pending patch is always in bounds. */
export function selectPatch(
  state: SelectionState,
  side: Side,
  drag: Drag,
  zoom: number,
): Patch {
  const { width, height } = sideSize(state, side);
  const patch = dragToPatch(drag, zoom, width, height);
  if (!patchInBounds(patch, width, height)) {
    throw new Error(`selection ${JSON.stringify(patch)} left image bounds`);
  }
  if (side === "a") state.pendingA = patch;
  else state.pendingB = patch;
  return patch;
}

export function clearPending(state: SelectionState, side?: Side): void {
  if (side !== "b") state.pendingA = null;
  if (side !== "a") state.pendingB = null;
}

/** A region pair needs both sides selected before it can be submitted. */
export function regionReady(state: SelectionState): boolean {
  return state.pendingA !== null && state.pendingB !== null;
}

export function commitEnabled(state: SelectionState): boolean {
  return state.nSamples >= MIN_SAMPLES;
}

const snapshot = (state: SelectionState): SelectionState =>
  structuredClone(state);

function restore(state: SelectionState, snap: SelectionState): void {
  Object.assign(state, structuredClone(snap));
}

function mirror(state: SelectionState, out: MutationOut): void {
  state.chartA = out.record.chart_a;
  state.chartB = out.record.chart_b;
  state.regions = out.record.regions;
  state.nSamples = out.record.n_samples;
  state.status = out.record.status;
  if (out.fit !== null) {
    state.residualIncreased =
      state.lastFit !== null &&
      out.fit.residual_rms > state.lastFit.residual_rms;
    state.lastFit = out.fit;
  }
}

function failureMessage(err: unknown): string {
  if (err instanceof ServiceError) {
    const d = err.detail as { message?: string } | string | null;
    if (typeof d === "string") return d;
    if (d && typeof d === "object" && d.message) return d.message;
  }
  return err instanceof Error ? err.message : String(err);
}

async function optimistic(
  state: SelectionState,
  apply: () => void,
  remote: () => Promise<MutationOut>,
): Promise<MutationResult> {
  const before = snapshot(state);
  apply();
  try {
    mirror(state, await remote());
    return { ok: true };
  } catch (err) {
    restore(state, before);
    return { ok: false, error: failureMessage(err) };
  }
}

/**
 * Place both chart grids from four corner-patch-center clicks per side
 * and sync them to the service.
 */
export function setChartFromCorners(
  state: SelectionState,
  client: AnnotationClient,
  cornersA: Point[],
  cornersB: Point[],
): Promise<MutationResult> {
  const gridA = chartGridFromCorners(
    cornersA,
    state.sizeA.width,
    state.sizeA.height,
  );
  const gridB = chartGridFromCorners(
    cornersB,
    state.sizeB.width,
    state.sizeB.height,
  );
  return optimistic(
    state,
    () => {
      state.chartA = gridA;
      state.chartB = gridB;
    },
    () => client.setChart(state.pairId, gridA, gridB),
  );
}

export interface PreviewPixels {
  pixels: Uint8ClampedArray;
  width: number;
}

/**
 * Submit the pending pair as a region correspondence. When preview pixels
 * are supplied, a local homogeneity check runs first and blocks the round
 * trip for obviously textured selections. On success the pendings clear;
 * on rejection the full prior state (pendings included) is restored.
 */
export async function submitRegion(
  state: SelectionState,
  client: AnnotationClient,
  previewA?: PreviewPixels,
  previewB?: PreviewPixels,
): Promise<MutationResult> {
  if (!regionReady(state)) {
    return { ok: false, error: "select a patch on both images first" };
  }
  const patchA = state.pendingA as Patch;
  const patchB = state.pendingB as Patch;
  for (const [preview, patch, side] of [
    [previewA, patchA, "a"],
    [previewB, patchB, "b"],
  ] as const) {
    if (preview) {
      const check = homogeneityPreview(preview.pixels, preview.width, patch);
      if (!check.pass) {
        return {
          ok: false,
          error: `patch ${side} looks inhomogeneous (cv ${check.cv.toFixed(3)})`,
        };
      }
    }
  }
  return optimistic(
    state,
    () => {
      state.regions = [...state.regions, { patch_a: patchA, patch_b: patchB }];
      state.pendingA = null;
      state.pendingB = null;
    },
    () => client.addRegion(state.pairId, patchA, patchB),
  );
}

export function removeRegion(
  state: SelectionState,
  client: AnnotationClient,
  index: number,
): Promise<MutationResult> {
  if (index < 0 || index >= state.regions.length) {
    return Promise.resolve({ ok: false, error: `no region at ${index}` });
  }
  return optimistic(
    state,
    () => {
      state.regions = state.regions.filter((_, i) => i !== index);
    },
    () => client.deleteRegion(state.pairId, index),
  );
}

/** Commit is never optimistic: the server fit decides the final state. */
export async function commitRecord(
  state: SelectionState,
  client: AnnotationClient,
): Promise<MutationResult> {
  if (!commitEnabled(state)) {
    return {
      ok: false,
      error: `need at least ${MIN_SAMPLES} samples, have ${state.nSamples}`,
    };
  }
  try {
    mirror(state, await client.commit(state.pairId));
    return { ok: true };
  } catch (err) {
    return { ok: false, error: failureMessage(err) };
  }
}
