import type { Transport } from '../src/api'
import { ApiClient } from '../src/api'

// Canned-response transport: routes are matched by "METHOD path-prefix".
// Each call is recorded so tests can assert what went over the wire.

export interface RecordedCall {
  method: string
  url: string
  body: unknown
}

export function mockTransport(routes: Record<string, unknown | ((call: RecordedCall) => unknown)>) {
  const calls: RecordedCall[] = []
  const transport: Transport = async (url, init) => {
    const method = init?.method ?? 'GET'
    const body = init?.body ? JSON.parse(String(init.body)) : undefined
    const call = { method, url, body }
    calls.push(call)
    for (const [route, response] of Object.entries(routes)) {
      const [routeMethod, prefix] = route.split(' ', 2)
      if (method === routeMethod && url.startsWith(prefix!)) {
        const payload = typeof response === 'function' ? response(call) : response
        if (payload && typeof payload === 'object' && '__status' in (payload as object)) {
          const { __status, ...rest } = payload as { __status: number } & Record<string, unknown>
          return new Response(JSON.stringify(rest), { status: __status })
        }
        return new Response(JSON.stringify(payload), { status: 200 })
      }
    }
    return new Response(JSON.stringify({ detail: `no route for ${method} ${url}` }), { status: 404 })
  }
  return { transport, calls }
}

export function clientFor(routes: Record<string, unknown | ((call: RecordedCall) => unknown)>) {
  const { transport, calls } = mockTransport(routes)
  return { api: new ApiClient('', transport), calls }
}
