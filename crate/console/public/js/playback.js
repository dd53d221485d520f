// Top-down trajectory playback with an altitude sparkline.
const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
export class PlaybackScene {
    constructor(trajectory, top, alt, overlays) {
        this.trajectory = trajectory;
        this.top = top;
        this.alt = alt;
        this.overlays = overlays;
        this.cursorValue = 0;
        let [x0, y0, x1, y1, z0, z1] = [Infinity, Infinity, -Infinity, -Infinity, Infinity, -Infinity];
        const points = trajectory.steps.flat().map((s) => s.position).concat(trajectory.targets);
        for (const [x, y, z] of points) {
            x0 = Math.min(x0, x);
            x1 = Math.max(x1, x);
            y0 = Math.min(y0, y);
            y1 = Math.max(y1, y);
            z0 = Math.min(z0, z);
            z1 = Math.max(z1, z);
        }
        const span = Math.max(x1 - x0, y1 - y0, 1);
        this.bounds = { x0, y0, span, z0, z1: Math.max(z1, z0 + 1) };
    }
    get steps() {
        return this.trajectory.steps.length;
    }
    get cursor() {
        return this.cursorValue;
    }
    /// Clamped into [0, steps - 1].
    set cursor(c) {
        this.cursorValue = Math.min(Math.max(Math.floor(c), 0), this.steps - 1);
    }
    toCanvas(x, y) {
        const pad = 12;
        const size = Math.min(this.top.width, this.top.height) - 2 * pad;
        const { x0, y0, span } = this.bounds;
        return [pad + ((x - x0) / span) * size, this.top.height - pad - ((y - y0) / span) * size];
    }
    draw() {
        this.drawTop();
        this.drawAltitude();
    }
    drawTop() {
        const ctx = this.top.getContext("2d");
        if (!ctx)
            return;
        const t = this.trajectory;
        ctx.clearRect(0, 0, this.top.width, this.top.height);
        if (this.overlays.targets) {
            ctx.strokeStyle = "#999";
            for (const [x, y] of t.targets) {
                const [cx, cy] = this.toCanvas(x, y);
                ctx.beginPath();
                ctx.arc(cx, cy, 6, 0, 2 * Math.PI);
                ctx.stroke();
            }
        }
        for (let r = 0; r < t.team_size; r++) {
            ctx.strokeStyle = COLORS[r % COLORS.length];
            ctx.globalAlpha = 0.35;
            ctx.beginPath();
            for (let k = 0; k <= this.cursorValue; k++) {
                const [cx, cy] = this.toCanvas(t.steps[k][r].position[0], t.steps[k][r].position[1]);
                if (k === 0)
                    ctx.moveTo(cx, cy);
                else
                    ctx.lineTo(cx, cy);
            }
            ctx.stroke();
        }
        ctx.globalAlpha = 1;
        const now = t.steps[this.cursorValue];
        if (this.overlays.links) {
            ctx.strokeStyle = "#444";
            ctx.beginPath();
            for (let r = 1; r < now.length; r++) {
                const [ax, ay] = this.toCanvas(now[r - 1].position[0], now[r - 1].position[1]);
                const [bx, by] = this.toCanvas(now[r].position[0], now[r].position[1]);
                ctx.moveTo(ax, ay);
                ctx.lineTo(bx, by);
            }
            ctx.stroke();
        }
        now.forEach((s, r) => {
            const [cx, cy] = this.toCanvas(s.position[0], s.position[1]);
            ctx.fillStyle = COLORS[r % COLORS.length];
            ctx.beginPath();
            ctx.arc(cx, cy, 4, 0, 2 * Math.PI);
            ctx.fill();
            if (this.overlays.headings) {
                const yaw = s.orientation[0];
                ctx.strokeStyle = ctx.fillStyle;
                ctx.beginPath();
                ctx.moveTo(cx, cy);
                ctx.lineTo(cx + 12 * Math.cos(yaw), cy - 12 * Math.sin(yaw));
                ctx.stroke();
            }
        });
    }
    drawAltitude() {
        const ctx = this.alt.getContext("2d");
        if (!ctx)
            return;
        const { z0, z1 } = this.bounds;
        const w = this.alt.width;
        const h = this.alt.height;
        ctx.clearRect(0, 0, w, h);
        const n = this.steps;
        const y = (z) => h - 4 - ((z - z0) / (z1 - z0)) * (h - 8);
        const x = (k) => (n > 1 ? (k / (n - 1)) * w : 0);
        ctx.strokeStyle = "#555";
        ctx.beginPath();
        this.trajectory.steps.forEach((s, k) => {
            const mean = s.reduce((acc, r) => acc + r.position[2], 0) / s.length;
            if (k === 0)
                ctx.moveTo(x(k), y(mean));
            else
                ctx.lineTo(x(k), y(mean));
        });
        ctx.stroke();
        ctx.strokeStyle = "#d62728";
        ctx.beginPath();
        ctx.moveTo(x(this.cursorValue), 0);
        ctx.lineTo(x(this.cursorValue), h);
        ctx.stroke();
    }
}
