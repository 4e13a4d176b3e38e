/* tslint:disable */
/* eslint-disable */

export class Refinement {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Runs `n` steps and returns `[step, loss, iou, bf1, meandist]`.
     */
    advance(n: number): Float64Array;
    groundTruth(): Float64Array;
    constructor(kind: string, size: number, seed: number, shift_row: number, shift_col: number, noise: number, w_contour: number, learning_rate: number);
    probabilities(): Float64Array;
}

/**
 * `size * size` exact values followed by `size * size` soft values.
 */
export function distance_transforms(mask: Float64Array, size: number, k: number, gamma: number, threshold: number, stabilized: boolean): Float64Array;

/**
 * `[contour, mse_edge, mse_dt]` for each shift `0..=max_shift`.
 */
export function loss_vs_shift(size: number, side: number, max_shift: number, k: number, stabilized: boolean): Float64Array;

/**
 * Rasterized shape (`disk`, `rectangle` or `convex-polygon`) as 0/1 values.
 */
export function shape(kind: string, size: number, seed: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_refinement_free: (a: number, b: number) => void;
    readonly distance_transforms: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly loss_vs_shift: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly refinement_advance: (a: number, b: number) => [number, number, number, number];
    readonly refinement_groundTruth: (a: number) => [number, number];
    readonly refinement_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
    readonly refinement_probabilities: (a: number) => [number, number];
    readonly shape: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
