// Wire types and calls for the labeling service. Field names match the JSON payloads.
export class ApiError extends Error {
    constructor(status, body, message) {
        super(message);
        this.status = status;
        this.body = body;
    }
    get code() {
        return this.body?.error ?? null;
    }
}
async function call(path, init) {
    const resp = await fetch(path, init);
    const text = await resp.text();
    if (!resp.ok) {
        let body = null;
        try {
            body = JSON.parse(text);
        }
        catch {
            // Non-JSON error page.
        }
        throw new ApiError(resp.status, body, body?.message ?? `${resp.status} ${text}`);
    }
    return JSON.parse(text);
}
function post(path, body) {
    return call(path, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
    });
}
export const api = {
    query: (kind) => call(`/api/query?kind=${kind}`),
    label: (query_id, payload) => post("/api/label", { query_id, payload, rater: "human", timestamp: Math.floor(Date.now() / 1000) }),
    retrain: (task) => post("/api/retrain", { task }),
    metrics: () => call("/api/metrics"),
    trajectory: (id) => call(`/api/trajectory/${encodeURIComponent(id)}`),
};
/// Rejects payloads that would render partially.
export function checkTrajectory(t) {
    if (!Array.isArray(t.steps) || t.steps.length === 0)
        throw new Error(`trajectory ${t.id}: no steps`);
    for (const s of t.steps) {
        if (!Array.isArray(s) || s.length !== t.team_size)
            throw new Error(`trajectory ${t.id}: step size mismatch`);
    }
}
