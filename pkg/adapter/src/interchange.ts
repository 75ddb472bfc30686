/** Correspondence interchange text: the contract the host pipeline parses.
 *
 * Header `corrs v1 <frame_a> <frame_b> <count>`, then count lines of
 * x_a, y_a, x_b, y_b, confidence, source separated by tabs. Coordinates
 * carry 4 decimals, confidence 6.
 */

export interface MatchRow {
  xa: number;
  ya: number;
  xb: number;
  yb: number;
  confidence: number;
  source: string;
}

export function formatInterchange(frameA: string, frameB: string, rows: MatchRow[]): string {
  const lines = [`corrs v1 ${frameA} ${frameB} ${rows.length}`];
  for (const r of rows) {
    lines.push(
      `${r.xa.toFixed(4)}\t${r.ya.toFixed(4)}\t${r.xb.toFixed(4)}\t${r.yb.toFixed(4)}\t` +
        `${r.confidence.toFixed(6)}\t${r.source}`,
    );
  }
  return lines.join('\n') + '\n';
}

/**
 * Drop rows whose endpoints leave their frame once serialized at 4 decimals.
 * Out-of-bounds output is dropped, never clamped; checking the rounded value
 * keeps a coordinate like 239.99997 from printing as the excluded bound.
 */
export function filterInBounds(
  rows: MatchRow[],
  widthA: number,
  heightA: number,
  widthB: number,
  heightB: number,
): MatchRow[] {
  const rounded = (v: number) => Number(v.toFixed(4));
  return rows.filter(
    (r) =>
      rounded(r.xa) >= 0 &&
      rounded(r.xa) < widthA &&
      rounded(r.ya) >= 0 &&
      rounded(r.ya) < heightA &&
      rounded(r.xb) >= 0 &&
      rounded(r.xb) < widthB &&
      rounded(r.yb) >= 0 &&
      rounded(r.yb) < heightB,
  );
}

/** Highest-confidence rows first, stable on ties, truncated to maxMatches. */
export function truncateByConfidence(rows: MatchRow[], maxMatches: number): MatchRow[] {
  const indexed = rows.map((row, i) => ({ row, i }));
  indexed.sort((a, b) => b.row.confidence - a.row.confidence || a.i - b.i);
  return indexed.slice(0, maxMatches).map((e) => e.row);
}
