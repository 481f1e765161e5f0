import { describe, expect, it } from 'vitest'

import { loadPage, pageCount, replacePrototype, toGridCells } from '../src/prototypePicker'
import { clientFor } from './helpers'

const page0 = {
  total: 48,
  offset: 0,
  samples: [
    { index: 3, thumbnail: 'AAAA' },
    { index: 7, thumbnail: 'BBBB' },
  ],
}

describe('prototype picker', () => {
  it('pages through the unlabeled pool', async () => {
    const { api, calls } = clientFor({ 'GET /datasets/ds1/samples': page0 })
    const page = await loadPage(api, 'ds1', 2, 24)
    expect(calls[0]?.url).toContain('offset=48')
    expect(page.cells.map((c) => c.index)).toEqual([3, 7])
    expect(pageCount(page)).toBe(2)
  })

  it('never renders a label field, even if the payload carries one', () => {
    const cells = toGridCells([
      { index: 1, thumbnail: 'AAAA', true_label: 2 },
      { index: 2, thumbnail: 'BBBB' },
    ])
    for (const cell of cells) {
      expect(Object.keys(cell).sort()).toEqual(['index', 'thumbnail'])
      expect(JSON.stringify(cell)).not.toContain('label')
    }
  })

  it('replace returns the new set id for the lineage view', async () => {
    const { api, calls } = clientFor({
      'POST /prototype-sets/ps1/replace': { set_id: 'ps2' },
    })
    const outcome = await replacePrototype(api, 'ps1', 3, 42)
    expect(outcome).toEqual({ ok: true, newSetId: 'ps2' })
    expect(calls[0]?.body).toEqual({ class_id: 3, index: 42 })
  })

  it('surfaces a 422 inline instead of throwing', async () => {
    const { api } = clientFor({
      'POST /prototype-sets/ps1/replace': {
        __status: 422,
        detail: 'index 42 is already a prototype',
      },
    })
    const outcome = await replacePrototype(api, 'ps1', 0, 42)
    expect(outcome.ok).toBe(false)
    expect(outcome.error).toContain('already a prototype')
  })

  it('still throws on non-validation failures', async () => {
    const { api } = clientFor({})
    await expect(replacePrototype(api, 'ps-missing', 0, 1)).rejects.toMatchObject({ status: 404 })
  })
})
