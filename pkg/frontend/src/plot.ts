/**
 * Log-log convergence figure builder.
 *
 * Renders estimator / energy-gap / goal-error curves against the cumulative
 * work (or dof) column, the per-level inner-step counts on a secondary right
 * axis, and reference slope triangles, as a standalone SVG document.
 */
import { readFileSync } from 'fs';
import * as path from 'path';

import { acceptedRows, parseRunCsv, stepCounts, RunTable } from './csv.js';
import { decadeTicks, linearScale, logScale, padLog } from './scales.js';

export interface PlotSpec {
  /** CSV paths produced by the runner; several files overlay with a legend. */
  inputs: string[];
  /** Abscissa column, typically "work" or "ndof". */
  x: string;
  /** Ordinate columns; each must exist in every input header. */
  y: string[];
  /** Adds a derived curve sqrt(energy - reference) when set. */
  energyReference?: number;
  /** Reference slopes drawn as annotated triangles. */
  slopeTriangles?: number[];
  /** Draw per-level inner-step counts on a secondary axis (default true). */
  stepMarkers?: boolean;
  output: string;
  title?: string;
}

export class PlotError extends Error {}

interface Series {
  label: string;
  marker: 'diamond' | 'circle' | 'square' | 'triangle';
  color: string;
  points: [number, number][];
}

const COLORS = ['#1f6fb4', '#d1491f', '#2c8a4b', '#7b52a1', '#a08112', '#3b3b3b'];
const MARKERS: Series['marker'][] = ['diamond', 'circle', 'square', 'triangle'];

function seriesFromTable(table: RunTable, spec: PlotSpec, fileLabel: string): Series[] {
  const rows = acceptedRows(table);
  const out: Series[] = [];
  const wanted: { column: string; label: string }[] = spec.y.map((c) => ({
    column: c,
    label: c,
  }));
  for (const { column, label } of wanted) {
    if (!table.columns.includes(column)) {
      throw new PlotError(`column '${column}' not in CSV header`);
    }
    if (!table.columns.includes(spec.x)) {
      throw new PlotError(`column '${spec.x}' not in CSV header`);
    }
    const points: [number, number][] = [];
    for (const row of rows) {
      const xv = row.values[spec.x];
      const yv = row.values[column];
      if (xv > 0 && yv > 0 && Number.isFinite(yv)) {
        points.push([xv, yv]);
      }
    }
    out.push({ label: fileLabel ? `${label} (${fileLabel})` : label, marker: 'diamond', color: '', points });
  }
  if (spec.energyReference !== undefined) {
    if (!table.columns.includes('energy')) {
      throw new PlotError("column 'energy' not in CSV header");
    }
    const points: [number, number][] = [];
    for (const row of rows) {
      const gap = row.values['energy'] - spec.energyReference;
      const xv = row.values[spec.x];
      if (xv > 0 && gap > 0) {
        points.push([xv, Math.sqrt(gap)]);
      }
    }
    const label = fileLabel ? `energy gap^1/2 (${fileLabel})` : 'energy gap^1/2';
    out.push({ label, marker: 'circle', color: '', points });
  }
  return out;
}

function markerShape(kind: Series['marker'], x: number, y: number, r: number, color: string): string {
  switch (kind) {
    case 'diamond':
      return `<path d="M${x} ${y - r} L${x + r} ${y} L${x} ${y + r} L${x - r} ${y} Z" fill="none" stroke="${color}" stroke-width="1.1"/>`;
    case 'circle':
      return `<circle cx="${x}" cy="${y}" r="${r * 0.85}" fill="none" stroke="${color}" stroke-width="1.1"/>`;
    case 'square':
      return `<rect x="${x - r * 0.75}" y="${y - r * 0.75}" width="${1.5 * r}" height="${1.5 * r}" fill="none" stroke="${color}" stroke-width="1.1"/>`;
    case 'triangle':
      return `<path d="M${x} ${y - r} L${x + r} ${y + r} L${x - r} ${y + r} Z" fill="none" stroke="${color}" stroke-width="1.1"/>`;
  }
}

function fmtPow10(value: number): string {
  const e = Math.round(Math.log10(value));
  return `1e${e}`;
}

/** Build the SVG document for a plot specification. */
export function renderSvg(spec: PlotSpec): string {
  if (!spec.inputs || spec.inputs.length === 0) {
    throw new PlotError('no input CSV given');
  }
  if (!spec.y || (spec.y.length === 0 && spec.energyReference === undefined)) {
    throw new PlotError('no ordinate columns requested');
  }
  const tables = spec.inputs.map((p) => ({
    label: spec.inputs.length > 1 ? path.basename(p).replace(/\.csv$/, '') : '',
    table: parseRunCsv(readFileSync(p, 'utf8')),
  }));

  const series: Series[] = [];
  for (const { label, table } of tables) {
    series.push(...seriesFromTable(table, spec, label));
  }
  series.forEach((s, i) => {
    s.color = COLORS[i % COLORS.length];
    s.marker = MARKERS[i % MARKERS.length];
  });
  const drawable = series.filter((s) => s.points.length > 0);
  if (drawable.length === 0) {
    throw new PlotError('no positive data points to plot');
  }

  const width = 720;
  const height = 480;
  const margin = { left: 72, right: 64, top: 40, bottom: 56 };
  const box = {
    x0: margin.left,
    x1: width - margin.right,
    y0: height - margin.bottom,
    y1: margin.top,
  };

  const xs = drawable.flatMap((s) => s.points.map((p) => p[0]));
  const ys = drawable.flatMap((s) => s.points.map((p) => p[1]));
  const [xLo, xHi] = padLog(Math.min(...xs), Math.max(...xs), 1.3);
  const [yLo, yHi] = padLog(Math.min(...ys), Math.max(...ys), 1.8);
  const sx = logScale([xLo, xHi], [box.x0, box.x1]);
  const sy = logScale([yLo, yHi], [box.y0, box.y1]);

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  if (spec.title) {
    parts.push(`<text x="${width / 2}" y="22" text-anchor="middle" font-size="15" font-family="sans-serif">${spec.title}</text>`);
  }
  parts.push(`<rect x="${box.x0}" y="${box.y1}" width="${box.x1 - box.x0}" height="${box.y0 - box.y1}" fill="none" stroke="#444"/>`);

  // decade grid and tick labels on both logarithmic axes
  for (const t of decadeTicks(xLo, xHi)) {
    const px = sx(t);
    parts.push(`<line x1="${px}" y1="${box.y0}" x2="${px}" y2="${box.y1}" stroke="#ddd"/>`);
    parts.push(`<text x="${px}" y="${box.y0 + 18}" text-anchor="middle" font-size="11" font-family="sans-serif">${fmtPow10(t)}</text>`);
  }
  for (const t of decadeTicks(yLo, yHi)) {
    const py = sy(t);
    parts.push(`<line x1="${box.x0}" y1="${py}" x2="${box.x1}" y2="${py}" stroke="#ddd"/>`);
    parts.push(`<text x="${box.x0 - 6}" y="${py + 4}" text-anchor="end" font-size="11" font-family="sans-serif">${fmtPow10(t)}</text>`);
  }
  parts.push(`<text x="${(box.x0 + box.x1) / 2}" y="${height - 14}" text-anchor="middle" font-size="13" font-family="sans-serif">${spec.x}</text>`);

  // curves with markers
  for (const s of drawable) {
    const pts = s.points.map(([x, y]) => `${sx(x).toFixed(2)},${sy(y).toFixed(2)}`).join(' ');
    parts.push(`<polyline points="${pts}" fill="none" stroke="${s.color}" stroke-width="1.3"/>`);
    for (const [x, y] of s.points) {
      parts.push(markerShape(s.marker, sx(x), sy(y), 3.4, s.color));
    }
  }

  // per-level step counts on a secondary linear right axis
  if (spec.stepMarkers !== false) {
    let kMax = 1;
    const all: { x: number; k: number }[] = [];
    for (const { table } of tables) {
      const counts = stepCounts(table);
      const finals = table.rows.filter((r) => r.event === 'stopped_inner');
      for (let i = 0; i < counts.length; i++) {
        const xv = finals[i].values[spec.x];
        if (xv > 0) {
          all.push({ x: xv, k: counts[i].k });
          kMax = Math.max(kMax, counts[i].k);
        }
      }
    }
    const sk = linearScale([0, kMax + 1], [box.y0, box.y1]);
    for (let k = 0; k <= kMax + 1; k++) {
      parts.push(`<text x="${box.x1 + 8}" y="${sk(k) + 4}" font-size="11" font-family="sans-serif" fill="#888">${k}</text>`);
    }
    parts.push(`<text x="${width - 12}" y="${(box.y0 + box.y1) / 2}" font-size="12" font-family="sans-serif" fill="#888" transform="rotate(90 ${width - 12} ${(box.y0 + box.y1) / 2})">inner steps</text>`);
    for (const { x, k } of all) {
      const px = sx(x);
      const py = sk(k);
      parts.push(`<path d="M${px - 3.5} ${py - 3.5} L${px + 3.5} ${py + 3.5} M${px - 3.5} ${py + 3.5} L${px + 3.5} ${py - 3.5}" stroke="#999" stroke-width="1.1"/>`);
    }
  }

  // slope reference triangles anchored under the first curve's trailing decade
  for (const s of spec.slopeTriangles ?? []) {
    const ref = drawable[0].points;
    const xMax = Math.max(...ref.map((p) => p[0]));
    const x1 = xMax / Math.pow(10, 0.2);
    const x0 = xMax / Math.pow(10, 1.0);
    const yNear = ref
      .filter((p) => p[0] >= x0)
      .reduce((acc, p) => Math.min(acc, p[1]), Infinity);
    const y0 = yNear / 2.5;
    const y1 = y0 * Math.pow(x1 / x0, s);
    const px0 = sx(x0);
    const px1 = sx(x1);
    const py0 = sy(y0);
    const py1 = sy(y1);
    parts.push(`<path d="M${px0} ${py0} L${px1} ${py0} L${px1} ${py1} Z" fill="none" stroke="#333" stroke-width="1"/>`);
    parts.push(`<text x="${(px0 + px1) / 2}" y="${py0 + 14}" text-anchor="middle" font-size="11" font-family="sans-serif">${s}</text>`);
  }

  // legend
  let ly = box.y1 + 14;
  for (const s of drawable) {
    const lx = box.x0 + 12;
    parts.push(markerShape(s.marker, lx, ly - 4, 3.4, s.color));
    parts.push(`<line x1="${lx - 8}" y1="${ly - 4}" x2="${lx + 8}" y2="${ly - 4}" stroke="${s.color}" stroke-width="1.2"/>`);
    parts.push(`<text x="${lx + 14}" y="${ly}" font-size="12" font-family="sans-serif">${s.label}</text>`);
    ly += 16;
  }

  parts.push('</svg>');
  return parts.join('\n');
}
