/* tslint:disable */
/* eslint-disable */

/**
 * Catalog entry as TOML; ids are matched up to reordering and case.
 */
export function catalog_entry(id: string): string;

/**
 * Every catalog id, one per line.
 */
export function catalog_ids(): string;

/**
 * Sensitivity report for a `z,d,y` CSV or an observables TOML document.
 * `mechanisms` is a comma or space separated list; empty means all.
 */
export function sensitivity(input: string, mechanisms: string, one_sided: boolean, smooth: boolean): string;

/**
 * Pass/fail table for the built-in counterexample fixtures.
 */
export function verify_counterexamples(): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly catalog_entry: (a: number, b: number) => [number, number, number, number];
    readonly catalog_ids: () => [number, number];
    readonly sensitivity: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly verify_counterexamples: () => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
