/* tslint:disable */
/* eslint-disable */

/**
 * Holds the projector for `N = 4`, `j = 1` on a small ball so that
 * repeated slices are cheap.
 */
export class Projector {
    free(): void;
    [Symbol.dispose](): void;
    constructor(nodes_per_axis: number);
    /**
     * Projects a Gaussian bump centered at `(cx, 0, cy, 0)` of width
     * `width` and samples the result on a `res x res` grid over the
     * `(x_0, x_2)` plane.
     */
    slice(cx: number, cy: number, width: number, res: number): Float64Array;
}

export function bubble_constant(n: number, p: number): number;

/**
 * `U_eps(r)` at `samples` radii evenly spaced on `[0, r_max]`.
 */
export function bubble_profile(n: number, p: number, eps: number, r_max: number, samples: number): Float64Array;

/**
 * `J(t u)` for `t` evenly spaced on `[0, t_max]`, where `u` is a bubble on a
 * small three-dimensional ball scaled onto the Nehari set. The last two
 * entries are the zero crossing and a scaling with negative energy.
 */
export function fibering_curve(p: number, eps: number, t_max: number, samples: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_projector_free: (a: number, b: number) => void;
    readonly bubble_constant: (a: number, b: number) => [number, number, number];
    readonly bubble_profile: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly fibering_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly projector_new: (a: number) => [number, number, number];
    readonly projector_slice: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
