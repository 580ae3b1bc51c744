/** Pure chart-series helpers for the stats dashboard. */

import type { StatsRow } from "./types.js";

export interface Pt {
  x: number;
  y: number;
}

/**
 * Split a series on nulls: each run of consecutive numbers becomes one
 * segment, so a null renders as a gap instead of a fake zero.
 */
export function segments(xs: number[], ys: (number | null)[]): Pt[][] {
  const out: Pt[][] = [];
  let run: Pt[] = [];
  ys.forEach((y, i) => {
    if (y === null) {
      if (run.length > 0) out.push(run);
      run = [];
    } else {
      run.push({ x: xs[i] ?? i, y });
    }
  });
  if (run.length > 0) out.push(run);
  return out;
}

/** False-count line: one point per iteration, values straight off the API. */
export function falseCountPoints(rows: StatsRow[]): Pt[] {
  return rows.map((row) => ({ x: row.iteration, y: row.false_count }));
}

export interface ProportionSeries {
  iterations: number[];
  fn: (number | null)[];
  tn: (number | null)[];
}

/** FN proportions pass through untouched; TN is the complement where defined. */
export function proportionSeries(rows: StatsRow[]): ProportionSeries {
  const fn = rows.map((row) => row.fn_proportion);
  return {
    iterations: rows.map((row) => row.iteration),
    fn,
    tn: fn.map((p) => (p === null ? null : 1 - p)),
  };
}

export interface ChartScale {
  xMin: number;
  xMax: number;
  yMin: number;
  yMax: number;
  width: number;
  height: number;
  pad: number;
}

export function scalePoint(scale: ChartScale, pt: Pt): [number, number] {
  const spanX = scale.xMax - scale.xMin || 1;
  const spanY = scale.yMax - scale.yMin || 1;
  const x = scale.pad + ((pt.x - scale.xMin) / spanX) * (scale.width - 2 * scale.pad);
  const y =
    scale.height - scale.pad - ((pt.y - scale.yMin) / spanY) * (scale.height - 2 * scale.pad);
  return [x, y];
}

/** One SVG path string per segment; empty segments yield no path. */
export function segmentPaths(segs: Pt[][], scale: ChartScale): string[] {
  return segs
    .filter((seg) => seg.length > 0)
    .map((seg) =>
      seg
        .map((pt, i) => {
          const [x, y] = scalePoint(scale, pt);
          return `${i === 0 ? "M" : "L"}${x.toFixed(1)},${y.toFixed(1)}`;
        })
        .join(" "),
    );
}
