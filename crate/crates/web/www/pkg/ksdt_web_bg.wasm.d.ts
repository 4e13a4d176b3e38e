/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_refinement_free: (a: number, b: number) => void;
export const distance_transforms: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const loss_vs_shift: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const refinement_advance: (a: number, b: number) => [number, number, number, number];
export const refinement_groundTruth: (a: number) => [number, number];
export const refinement_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
export const refinement_probabilities: (a: number) => [number, number];
export const shape: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
