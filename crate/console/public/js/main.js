// Labeling flow: fetch a query, play it back, rate it, submit, fetch the next one.
import { api, ApiError, checkTrajectory } from "./api.js";
import { PlaybackScene } from "./playback.js";
const $ = (id) => document.getElementById(id);
const state = {
    kind: "level",
    query: null,
    scenes: [],
    selection: null,
    submitting: false,
    playing: false,
    speed: 1,
    demarcations: [],
    overlays: { links: true, headings: false, targets: true },
};
function banner(text, retry) {
    const el = $("banner");
    el.textContent = text;
    el.hidden = text === "";
    if (retry) {
        const b = document.createElement("button");
        b.textContent = "Retry";
        b.onclick = () => {
            banner("");
            retry();
        };
        el.append(" ", b);
    }
}
function fmt(v) {
    return v === null ? "–" : `${(100 * v).toFixed(1)}%`;
}
function renderMetrics(m) {
    $("revision").textContent = String(m.revision);
    $("stale").hidden = true;
    $("pool-levels").textContent = String(m.pools.levels);
    $("pool-prefs").textContent = String(m.pools.preferences);
    $("acc-level").textContent = fmt(m.level_accuracy);
    $("acc-pref").textContent = fmt(m.preference_accuracy);
    $("trained").textContent = m.trained ? "trained" : "untrained";
    const hist = $("histogram");
    hist.replaceChildren();
    for (const [name, count] of [
        ["1", m.histogram.one],
        ["0.5", m.histogram.half],
        ["0", m.histogram.zero],
    ]) {
        const row = document.createElement("div");
        row.className = "bar";
        const width = m.sample_count > 0 ? (100 * count) / m.sample_count : 0;
        row.innerHTML = `<span>${name}</span><span class="fill" style="width:${width}%"></span><span>${count}</span>`;
        hist.append(row);
    }
    $("sample-count").textContent = String(m.sample_count);
    if (state.demarcations.join() !== m.demarcations.join()) {
        state.demarcations = m.demarcations;
        renderLevelButtons();
    }
}
async function refreshMetrics() {
    try {
        renderMetrics(await api.metrics());
    }
    catch {
        $("stale").hidden = false;
    }
}
function renderLevelButtons() {
    const box = $("levels");
    box.replaceChildren();
    state.demarcations.forEach((level, i) => {
        const b = document.createElement("button");
        b.textContent = `${level} (${i + 1})`;
        b.onclick = () => select({ kind: "level", level });
        b.dataset.level = String(level);
        box.append(b);
    });
}
function select(sel) {
    if (!state.query || sel?.kind !== state.query.kind)
        return;
    state.selection = sel;
    document.querySelectorAll("#levels button").forEach((b) => {
        b.classList.toggle("selected", sel?.kind === "level" && b.dataset.level === String(sel.level));
    });
    for (const side of ["a", "b"]) {
        $(`prefer-${side}`).classList.toggle("selected", sel?.kind === "preference" && sel.side === side);
    }
    updateControls();
}
function updateControls() {
    const q = state.query;
    $("submit").disabled = !q || !state.selection || state.submitting;
    $("levels").hidden = q?.kind !== "level";
    $("preference").hidden = q?.kind !== "preference";
    const scrub = $("scrub");
    const steps = Math.max(0, ...state.scenes.map((s) => s.steps));
    scrub.max = String(Math.max(steps - 1, 0));
    scrub.value = String(state.scenes[0]?.cursor ?? 0);
    scrub.disabled = state.scenes.length === 0;
}
function setCursor(c) {
    // Scenes share one cursor so a preference pair plays in lockstep.
    for (const s of state.scenes) {
        s.cursor = c;
        s.draw();
    }
    $("scrub").value = String(state.scenes[0]?.cursor ?? 0);
}
function describe(q) {
    return q.items
        .map((it, i) => {
        const f = it.features;
        const label = q.kind === "preference" ? ` ${"AB"[i]}` : "";
        return `${it.trajectory_id}${label}: speed ${f.avg_speed.toFixed(2)} m/s, formation error ${f.formation_error.toFixed(2)} m, heading variance ${f.heading_variance.toFixed(3)}`;
    })
        .join("\n");
}
async function fetchQuery() {
    state.playing = false;
    banner("");
    $("fetch").disabled = true;
    try {
        const resp = await api.query(state.kind);
        const trajectories = await Promise.all(resp.query.items.map((it) => api.trajectory(it.trajectory_id)));
        trajectories.forEach(checkTrajectory);
        // Render only once every payload is in hand.
        const panes = $("scenes");
        panes.replaceChildren();
        state.scenes = trajectories.map((t, i) => {
            const pane = document.createElement("figure");
            const top = document.createElement("canvas");
            top.width = 360;
            top.height = 360;
            const alt = document.createElement("canvas");
            alt.width = 360;
            alt.height = 60;
            const cap = document.createElement("figcaption");
            cap.textContent = resp.query.kind === "preference" ? `Trajectory ${"AB"[i]}` : t.id;
            pane.append(cap, top, alt);
            panes.append(pane);
            return new PlaybackScene(t, top, alt, state.overlays);
        });
        state.query = resp.query;
        state.selection = null;
        $("query-info").textContent = describe(resp.query);
        setCursor(0);
        select(null);
        updateControls();
    }
    catch (e) {
        if (e instanceof ApiError && e.code === "exhausted") {
            state.query = null;
            state.scenes = [];
            $("scenes").replaceChildren();
            banner(`No ${state.kind} queries left: ${e.message}`);
        }
        else {
            banner(`Could not load a query: ${e.message}`, fetchQuery);
        }
        updateControls();
    }
    finally {
        $("fetch").disabled = false;
    }
}
function payload(sel) {
    if (sel.kind === "level")
        return { kind: "level", level: sel.level };
    return { kind: "preference", label: sel.side === "a" ? [1, 0] : [0, 1] };
}
async function submit() {
    const q = state.query;
    const sel = state.selection;
    if (!q || !sel || state.submitting)
        return;
    state.submitting = true;
    updateControls();
    try {
        const ack = await api.label(q.query_id, payload(sel));
        $("revision").textContent = String(ack.revision);
        $("pool-levels").textContent = String(ack.pools.levels);
        $("pool-prefs").textContent = String(ack.pools.preferences);
        state.submitting = false;
        void refreshMetrics();
        await fetchQuery();
    }
    catch (e) {
        // Keep the query and selection so the rater can retry or move on.
        banner(`Label not stored: ${e.message}`);
    }
    finally {
        state.submitting = false;
        updateControls();
    }
}
async function retrain(task) {
    const b = $(`retrain-${task}`);
    b.disabled = true;
    $("retrain-status").textContent = `retraining ${task}…`;
    try {
        const r = await api.retrain(task);
        $("retrain-status").textContent = `task ${r.task}: final loss ${r.final_loss.toFixed(4)}${r.queued ? " (queued)" : ""}`;
        await refreshMetrics();
    }
    catch (e) {
        $("retrain-status").textContent = `retrain failed: ${e.message}`;
    }
    finally {
        b.disabled = false;
    }
}
let last = 0;
function tick(now) {
    if (state.playing && state.scenes.length > 0) {
        const dt = state.scenes[0].trajectory.dt * 1000;
        const advance = Math.floor(((now - last) * state.speed) / dt);
        if (advance > 0) {
            last = now;
            const next = state.scenes[0].cursor + advance;
            const end = Math.max(...state.scenes.map((s) => s.steps)) - 1;
            setCursor(Math.min(next, end));
            if (next >= end)
                state.playing = false;
        }
    }
    else {
        last = now;
    }
    requestAnimationFrame(tick);
}
function wire() {
    $("kind").onchange = (e) => {
        state.kind = e.target.value;
    };
    $("fetch").onclick = () => void fetchQuery();
    $("submit").onclick = () => void submit();
    $("prefer-a").onclick = () => select({ kind: "preference", side: "a" });
    $("prefer-b").onclick = () => select({ kind: "preference", side: "b" });
    $("retrain-a").onclick = () => void retrain("a");
    $("retrain-b").onclick = () => void retrain("b");
    $("play").onclick = () => {
        state.playing = !state.playing;
    };
    $("scrub").oninput = (e) => {
        state.playing = false;
        setCursor(Number(e.target.value));
    };
    $("speed").onchange = (e) => {
        state.speed = Number(e.target.value);
    };
    for (const key of ["links", "headings", "targets"]) {
        const box = $(`overlay-${key}`);
        box.checked = state.overlays[key];
        box.onchange = () => {
            state.overlays[key] = box.checked;
            state.scenes.forEach((s) => s.draw());
        };
    }
    document.addEventListener("keydown", (e) => {
        if (e.target instanceof HTMLInputElement || e.target instanceof HTMLSelectElement)
            return;
        const n = Number(e.key);
        if (Number.isInteger(n) && n >= 1 && n <= state.demarcations.length) {
            select({ kind: "level", level: state.demarcations[n - 1] });
        }
        else if (e.key === "a" || e.key === "b") {
            select({ kind: "preference", side: e.key });
        }
        else if (e.key === "Enter") {
            void submit();
        }
        else if (e.key === " ") {
            e.preventDefault();
            state.playing = !state.playing;
        }
    });
}
wire();
void refreshMetrics();
setInterval(() => void refreshMetrics(), 5000);
requestAnimationFrame(tick);
