import { z } from 'zod'

// Typed client over the workbench HTTP API. The transport is injectable so
// component tests can run against canned responses.

export type Transport = (url: string, init?: RequestInit) => Promise<Response>

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`${status}: ${detail}`)
  }
}

const SampleSchema = z.object({
  index: z.number().int(),
  thumbnail: z.string(),
  true_label: z.number().int().optional(),
})

const SamplePageSchema = z.object({
  total: z.number().int(),
  offset: z.number().int(),
  samples: z.array(SampleSchema),
})

const PrototypeSetSchema = z.object({
  set_id: z.string(),
  dataset_id: z.string(),
  per_class_indices: z.array(z.array(z.number().int())),
  provenance: z.string(),
  parent_id: z.string().nullable(),
})

const EvalPointSchema = z.object({
  step: z.number().int(),
  accuracy: z.number(),
  per_class: z.array(z.number()),
})

const ClassAccuraciesSchema = z.object({
  latest: EvalPointSchema.nullable(),
  history: z.array(EvalPointSchema),
})

const DiagnosisSchema = z.object({
  verdict: z.string(),
  max_drop: z.number().optional(),
  plateau_length: z.number().optional(),
  weak_classes: z.array(z.number().int()).optional(),
  suggestions: z.array(z.tuple([z.string(), z.string()])),
})

const RunSummarySchema = z.object({
  run_id: z.string(),
  state: z.string(),
  best_accuracy: z.number().nullable(),
  config: z.record(z.unknown()),
  lineage: z.object({
    source_run: z.string().nullable(),
    prototype_set: z.string(),
    k_per_class: z.number().int().optional(),
  }),
  diagnosis: DiagnosisSchema.nullable(),
})

const PseudoLabelSchema = z.object({
  pool_index: z.number().int(),
  pseudo_label: z.number().int(),
  confidence: z.number(),
})

export type Sample = z.infer<typeof SampleSchema>
export type SamplePage = z.infer<typeof SamplePageSchema>
export type PrototypeSet = z.infer<typeof PrototypeSetSchema>
export type EvalPoint = z.infer<typeof EvalPointSchema>
export type ClassAccuracies = z.infer<typeof ClassAccuraciesSchema>
export type Diagnosis = z.infer<typeof DiagnosisSchema>
export type RunSummary = z.infer<typeof RunSummarySchema>
export type PseudoLabel = z.infer<typeof PseudoLabelSchema>

export class ApiClient {
  constructor(
    private baseUrl: string,
    private transport: Transport = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(schema: z.ZodType<T>, path: string, init?: RequestInit): Promise<T> {
    const res = await this.transport(`${this.baseUrl}${path}`, init)
    const body = await res.json().catch(() => ({}))
    if (!res.ok) {
      const detail = typeof body?.detail === 'string' ? body.detail : res.statusText
      throw new ApiError(res.status, detail)
    }
    return schema.parse(body)
  }

  private post<T>(schema: z.ZodType<T>, path: string, payload: unknown): Promise<T> {
    return this.request(schema, path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(payload),
    })
  }

  getSamples(datasetId: string, offset = 0, limit = 24): Promise<SamplePage> {
    return this.request(SamplePageSchema, `/datasets/${datasetId}/samples?offset=${offset}&limit=${limit}`)
  }

  getPrototypeSet(setId: string): Promise<PrototypeSet> {
    return this.request(PrototypeSetSchema, `/prototype-sets/${setId}`)
  }

  replacePrototype(setId: string, classId: number, index: number): Promise<{ set_id: string }> {
    return this.post(z.object({ set_id: z.string() }), `/prototype-sets/${setId}/replace`, {
      class_id: classId,
      index,
    })
  }

  getRun(runId: string): Promise<RunSummary> {
    return this.request(RunSummarySchema, `/runs/${runId}`)
  }

  getClassAccuracies(runId: string): Promise<ClassAccuracies> {
    return this.request(ClassAccuraciesSchema, `/runs/${runId}/class-accuracies`)
  }

  getDiagnosis(runId: string): Promise<Diagnosis> {
    return this.request(DiagnosisSchema, `/runs/${runId}/diagnosis`)
  }

  getPseudoLabels(runId: string, top: number, classId?: number): Promise<PseudoLabel[]> {
    const cls = classId === undefined ? '' : `&class=${classId}`
    return this.request(
      z.object({ records: z.array(PseudoLabelSchema) }),
      `/runs/${runId}/pseudo-labels?top=${top}${cls}`,
    ).then((body) => body.records)
  }

  startRun(payload: {
    dataset_id: string
    prototype_set_id: string
    preset?: string
    overrides?: Record<string, unknown>
  }): Promise<{ run_id: string }> {
    return this.post(z.object({ run_id: z.string() }), '/runs', payload)
  }

  selfTrain(runId: string, kPerClass: number, overrides: Record<string, unknown> = {}): Promise<{ run_id: string }> {
    return this.post(z.object({ run_id: z.string() }), `/runs/${runId}/self-train`, {
      k_per_class: kPerClass,
      overrides,
    })
  }

  stopRun(runId: string): Promise<{ run_id: string; state: string }> {
    return this.post(z.object({ run_id: z.string(), state: z.string() }), `/runs/${runId}/stop`, {})
  }
}
