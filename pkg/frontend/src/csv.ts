/**
 * Reader for the solver's per-step CSV output.
 *
 * The schema is fixed by the runner: a header line followed by comma-separated
 * rows without quoting; every column except `event` is numeric ("nan" marks
 * columns absent on a given row, e.g. dual quantities on inner steps).
 */

export interface StepRow {
  ell: number;
  k: number;
  event: string;
  values: Record<string, number>;
}

export interface RunTable {
  columns: string[];
  rows: StepRow[];
}

export class CsvError extends Error {}

const REQUIRED = ['ell', 'k', 'event'];

export function parseRunCsv(text: string): RunTable {
  const lines = text.split(/\r?\n/).filter((line) => line.trim().length > 0);
  if (lines.length === 0) {
    throw new CsvError('empty CSV: no header line');
  }
  const columns = lines[0].split(',');
  for (const name of REQUIRED) {
    if (!columns.includes(name)) {
      throw new CsvError(`missing required column '${name}'`);
    }
  }
  const rows: StepRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(',');
    if (parts.length !== columns.length) {
      throw new CsvError(`row ${i + 1} has ${parts.length} fields, expected ${columns.length}`);
    }
    const values: Record<string, number> = {};
    let event = '';
    for (let j = 0; j < columns.length; j++) {
      if (columns[j] === 'event') {
        event = parts[j];
      } else {
        values[columns[j]] = Number(parts[j]);
      }
    }
    rows.push({ ell: values['ell'], k: values['k'], event, values });
  }
  if (rows.length === 0) {
    throw new CsvError('empty CSV: header but no data rows');
  }
  return { columns, rows };
}

/** Rows that represent kept solver steps (discarded attempts excluded). */
export function acceptedRows(table: RunTable): StepRow[] {
  return table.rows.filter((r) => r.event === 'accepted' || r.event === 'stopped_inner');
}

/** Final inner-step count per refinement level, in level order. */
export function stepCounts(table: RunTable): { ell: number; k: number }[] {
  return table.rows
    .filter((r) => r.event === 'stopped_inner')
    .map((r) => ({ ell: r.ell, k: r.k }));
}
