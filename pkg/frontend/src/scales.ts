/** Logarithmic axis helpers for the SVG renderer. */

export interface LogScale {
  (value: number): number;
  domain: [number, number];
  range: [number, number];
}

export function logScale(domain: [number, number], range: [number, number]): LogScale {
  const [d0, d1] = domain.map(Math.log10);
  const [r0, r1] = range;
  const scale = ((value: number) =>
    r0 + ((Math.log10(value) - d0) / (d1 - d0)) * (r1 - r0)) as LogScale;
  scale.domain = domain;
  scale.range = range;
  return scale;
}

export function linearScale(domain: [number, number], range: [number, number]) {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  return (value: number) => r0 + ((value - d0) / span) * (r1 - r0);
}

/** Powers of ten covering [lo, hi]. */
export function decadeTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.ceil(Math.log10(lo) - 1e-9); e <= Math.floor(Math.log10(hi) + 1e-9); e++) {
    ticks.push(Math.pow(10, e));
  }
  return ticks;
}

/** Pad a positive interval multiplicatively so curves stay off the frame. */
export function padLog(lo: number, hi: number, factor = 1.5): [number, number] {
  return [lo / factor, hi * factor];
}
