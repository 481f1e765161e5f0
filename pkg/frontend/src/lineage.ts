import type { ApiClient, PrototypeSet, RunSummary } from './api'

// Version graph over prototype sets: refining and self-training both fork a
// set, so the history is a chain/tree linked by parent_id, with runs attached
// to the set they trained on.

export interface LineageNode {
  setId: string
  provenance: string
  parentId: string | null
  perClassCounts: number[]
  runs: { runId: string; state: string; bestAccuracy: number | null; kPerClass?: number }[]
}

export async function buildLineage(
  api: ApiClient,
  leafSetId: string,
  runs: RunSummary[],
): Promise<LineageNode[]> {
  const chain: LineageNode[] = []
  let cursor: string | null = leafSetId
  const seen = new Set<string>()
  while (cursor && !seen.has(cursor)) {
    seen.add(cursor)
    const set: PrototypeSet = await api.getPrototypeSet(cursor)
    chain.push({
      setId: set.set_id,
      provenance: set.provenance,
      parentId: set.parent_id,
      perClassCounts: set.per_class_indices.map((c) => c.length),
      runs: runs
        .filter((r) => r.lineage.prototype_set === set.set_id)
        .map((r) => ({
          runId: r.run_id,
          state: r.state,
          bestAccuracy: r.best_accuracy,
          kPerClass: r.lineage.k_per_class,
        })),
    })
    cursor = set.parent_id
  }
  return chain.reverse() // oldest ancestor first
}
