/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_projector_free: (a: number, b: number) => void;
export const bubble_constant: (a: number, b: number) => [number, number, number];
export const bubble_profile: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const fibering_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const projector_new: (a: number) => [number, number, number];
export const projector_slice: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
