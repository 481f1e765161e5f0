import { describe, expect, it } from 'vitest'

import { buildPanelState, loadPanelState } from '../src/accuracyPanel'
import type { ClassAccuracies, Diagnosis } from '../src/api'
import { clientFor } from './helpers'

const healthyDiag: Diagnosis = { verdict: 'healthy', weak_classes: [], suggestions: [] }

function acc(perClass: number[], history: number[] = [0.5, 0.7]): ClassAccuracies {
  const overall = perClass.reduce((a, b) => a + b, 0) / perClass.length
  return {
    latest: { step: 100, accuracy: overall, per_class: perClass },
    history: history.map((a, i) => ({ step: (i + 1) * 50, accuracy: a, per_class: perClass })),
  }
}

describe('accuracy panel state', () => {
  it('flags the classes the diagnosis marks weak', () => {
    const perClass = [0.29, 0.98, 0.95, 0.97]
    const diag: Diagnosis = { verdict: 'local-minimum', weak_classes: [0], suggestions: [] }
    const state = buildPanelState(acc(perClass), diag)
    expect(state.bars.map((b) => b.weak)).toEqual([true, false, false, false])
    expect(state.bars[0]?.accuracy).toBe(0.29)
  })

  it('highlights nothing when all classes are equal', () => {
    const state = buildPanelState(acc([0.9, 0.9, 0.9, 0.9]), healthyDiag)
    expect(state.bars.every((b) => !b.weak)).toBe(true)
    expect(state.banner).toBeNull()
  })

  it('shows a banner with tuning directions on instability', () => {
    const diag: Diagnosis = {
      verdict: 'instability',
      weak_classes: [],
      suggestions: [
        ['delta', 'decrease'],
        ['lambda_u', 'decrease'],
        ['tau', 'increase'],
      ],
    }
    const state = buildPanelState(acc([0.6, 0.7, 0.65, 0.62]), diag)
    expect(state.banner?.verdict).toBe('instability')
    expect(state.banner?.suggestions).toContainEqual({ param: 'lambda_u', direction: 'decrease' })
    expect(state.banner?.suggestions).toContainEqual({ param: 'tau', direction: 'increase' })
  })

  it('builds the sparkline from the eval history', () => {
    const state = buildPanelState(acc([0.8, 0.8], [0.4, 0.6, 0.8]), healthyDiag)
    expect(state.sparkline).toEqual([0.4, 0.6, 0.8])
  })

  it('returns the empty state for a missing run', async () => {
    const { api } = clientFor({}) // every route 404s
    const state = await loadPanelState(api, 'run-nope')
    expect(state.empty).toBe(true)
    expect(state.bars).toEqual([])
  })

  it('only renders numbers that came from the API payload', async () => {
    const payload = acc([0.5, 0.75])
    const { api } = clientFor({
      'GET /runs/run-a/class-accuracies': payload,
      'GET /runs/run-a/diagnosis': healthyDiag,
    })
    const state = await loadPanelState(api, 'run-a')
    const rendered = [state.overall, ...state.bars.map((b) => b.accuracy), ...state.sparkline]
    const fromApi = new Set([
      payload.latest!.accuracy,
      ...payload.latest!.per_class,
      ...payload.history.map((e) => e.accuracy),
    ])
    for (const value of rendered) {
      expect(fromApi.has(value as number)).toBe(true)
    }
  })
})
