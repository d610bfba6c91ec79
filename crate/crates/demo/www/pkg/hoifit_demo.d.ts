/* tslint:disable */
/* eslint-disable */

/**
 * Averages `n` noisy copies of a random rotation (axis uniform, angle
 * `|N(0, sigma)|`) and projects the mean back onto SO(3).
 *
 * Layout: `[mean per-sample error, error of the average, det]`, radians.
 */
export function rotation_average(sigma: number, n: number, seed: number): Float64Array;

/**
 * Toy body facing the camera with its pelvis at `depth`, scaled to mean
 * depth `z0`.
 *
 * Layout: `[s, mean_before, mean_after, max_pixel_shift, n,
 * n x (u, v), n x (x, z) before, n x (x, z) after]`.
 */
export function scaling_view(depth: number, z0: number): Float64Array;

/**
 * Object distance field on the `z = 0` plane through a template, and
 * `seeds` random points of that plane projected onto the surface.
 *
 * Layout: `[res, res x res clamped distances (row-major, y down),
 * seeds, seeds x (x, y), kept, kept x (x, y)]`, coordinates in meters
 * within `[-0.2, 0.2]`.
 */
export function udf_slice(shape: string, res: number, seeds: number, iterations: number, seed: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly rotation_average: (a: number, b: number, c: number) => [number, number, number, number];
    readonly scaling_view: (a: number, b: number) => [number, number, number, number];
    readonly udf_slice: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
