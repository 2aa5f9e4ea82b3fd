#!/usr/bin/env node
/**
 * plots CLI: render a log-log convergence figure from runner CSVs.
 *
 * Usage:
 *   ailfem-plots <spec.json>
 *   ailfem-plots --input run.csv [--input more.csv] --x work --y eta \
 *       [--energy-reference V] [--slope -0.5] [--no-step-markers] \
 *       [--title T] --output figure.svg
 *
 * Exits 0 on success, 2 on bad arguments, missing columns, or unreadable
 * input.
 */
import { readFileSync, writeFileSync } from 'fs';

import { CsvError } from './csv.js';
import { PlotError, PlotSpec, renderSvg } from './plot.js';

function usage(): never {
  process.stderr.write(
    'usage: ailfem-plots <spec.json> | --input CSV [--input CSV...] --x COL ' +
      '--y COL [--y COL...] [--energy-reference V] [--slope S...] ' +
      '[--no-step-markers] [--title T] --output OUT.svg\n',
  );
  process.exit(2);
}

function parseArgs(argv: string[]): PlotSpec {
  if (argv.length === 1 && !argv[0].startsWith('--')) {
    const raw = JSON.parse(readFileSync(argv[0], 'utf8'));
    return raw as PlotSpec;
  }
  const spec: PlotSpec = { inputs: [], x: 'work', y: [], output: '' };
  let i = 0;
  const next = () => {
    i += 1;
    if (i >= argv.length) usage();
    return argv[i];
  };
  while (i < argv.length) {
    switch (argv[i]) {
      case '--input':
        spec.inputs.push(next());
        break;
      case '--x':
        spec.x = next();
        break;
      case '--y':
        spec.y.push(next());
        break;
      case '--energy-reference':
        spec.energyReference = Number(next());
        break;
      case '--slope':
        (spec.slopeTriangles ??= []).push(Number(next()));
        break;
      case '--no-step-markers':
        spec.stepMarkers = false;
        break;
      case '--title':
        spec.title = next();
        break;
      case '--output':
        spec.output = next();
        break;
      default:
        usage();
    }
    i += 1;
  }
  return spec;
}

export function main(argv: string[]): number {
  if (argv.length === 0) usage();
  let spec: PlotSpec;
  try {
    spec = parseArgs(argv);
  } catch (err) {
    process.stderr.write(`ailfem-plots: bad specification: ${(err as Error).message}\n`);
    return 2;
  }
  if (!spec.output) {
    process.stderr.write('ailfem-plots: missing output path\n');
    return 2;
  }
  try {
    const svg = renderSvg(spec);
    writeFileSync(spec.output, svg);
    process.stdout.write(`wrote ${spec.output}\n`);
    return 0;
  } catch (err) {
    if (err instanceof PlotError || err instanceof CsvError || (err as NodeJS.ErrnoException).code === 'ENOENT') {
      process.stderr.write(`ailfem-plots: ${(err as Error).message}\n`);
      return 2;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
