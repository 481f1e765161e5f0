import { describe, expect, it } from 'vitest'

import type { RunSummary } from '../src/api'
import { buildLineage } from '../src/lineage'
import { clientFor } from './helpers'

const sets = {
  ps1: {
    set_id: 'ps1',
    dataset_id: 'ds',
    per_class_indices: [[0], [1]],
    provenance: 'manual',
    parent_id: null,
  },
  ps2: {
    set_id: 'ps2',
    dataset_id: 'ds',
    per_class_indices: [[9], [1]],
    provenance: 'replaced',
    parent_id: 'ps1',
  },
  ps3: {
    set_id: 'ps3',
    dataset_id: 'ds',
    per_class_indices: [
      [9, 10, 11],
      [1, 12, 13],
    ],
    provenance: 'self-train-augmented',
    parent_id: 'ps2',
  },
}

function run(id: string, setId: string, source: string | null, k?: number): RunSummary {
  return {
    run_id: id,
    state: 'completed',
    best_accuracy: 0.8,
    config: {},
    lineage: { source_run: source, prototype_set: setId, k_per_class: k },
    diagnosis: null,
  }
}

describe('lineage view', () => {
  it('walks parent links and orders oldest first', async () => {
    const { api } = clientFor({
      'GET /prototype-sets/ps1': sets.ps1,
      'GET /prototype-sets/ps2': sets.ps2,
      'GET /prototype-sets/ps3': sets.ps3,
    })
    const chain = await buildLineage(api, 'ps3', [
      run('run-1', 'ps2', null),
      run('run-2', 'ps3', 'run-1', 2),
    ])
    expect(chain.map((n) => n.setId)).toEqual(['ps1', 'ps2', 'ps3'])
    expect(chain.map((n) => n.provenance)).toEqual(['manual', 'replaced', 'self-train-augmented'])
    expect(chain[2]?.perClassCounts).toEqual([3, 3])
    expect(chain[1]?.runs).toEqual([
      { runId: 'run-1', state: 'completed', bestAccuracy: 0.8, kPerClass: undefined },
    ])
    expect(chain[2]?.runs[0]?.kPerClass).toBe(2)
  })

  it('tolerates a parent cycle without looping forever', async () => {
    const { api } = clientFor({
      'GET /prototype-sets/psX': { ...sets.ps2, set_id: 'psX', parent_id: 'psX' },
    })
    const chain = await buildLineage(api, 'psX', [])
    expect(chain).toHaveLength(1)
  })
})
