import init, { rigidBody, wongOrbit, routh } from "./pkg/algebromech_web.js";

const COLORS = ["#c33", "#36c", "#393", "#a6c"];

function num(fs, name) {
  return parseFloat(fs.querySelector(`[name=${name}]`).value);
}

function nums(fs, name) {
  return fs.querySelector(`[name=${name}]`).value.trim().split(/[\s,]+/).map(Number);
}

function column(rows, width, k) {
  const out = [];
  for (let i = k; i < rows.length; i += width) out.push(rows[i]);
  return out;
}

// Plot each series against x on its own autoscaled axis.
function plot(canvas, x, series, equalAxes) {
  const g = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  g.clearRect(0, 0, w, h);
  const all = series.flat();
  let lo = Math.min(...all), hi = Math.max(...all);
  let xlo = Math.min(...x), xhi = Math.max(...x);
  if (equalAxes) {
    lo = xlo = Math.min(lo, xlo);
    hi = xhi = Math.max(hi, xhi);
  }
  if (hi === lo) { hi += 1; lo -= 1; }
  const px = (v) => 10 + ((v - xlo) / (xhi - xlo)) * (w - 20);
  const py = (v) => h - 10 - ((v - lo) / (hi - lo)) * (h - 20);
  series.forEach((s, j) => {
    g.strokeStyle = COLORS[j % COLORS.length];
    g.beginPath();
    s.forEach((v, i) => (i ? g.lineTo(px(x[i]), py(v)) : g.moveTo(px(x[i]), py(v))));
    g.stroke();
  });
}

function drift(s) {
  return Math.max(...s.map((v) => Math.abs(v - s[0]))).toExponential(2);
}

function guard(fs, f) {
  fs.querySelector("button").onclick = () => {
    const out = fs.querySelector(".out");
    try {
      f(fs, fs.querySelector("canvas"), out);
    } catch (e) {
      out.textContent = `error: ${e.message ?? e}`;
    }
  };
}

await init();

guard(document.getElementById("rb"), (fs, canvas, out) => {
  const inertia = Float64Array.of(num(fs, "i1"), num(fs, "i2"), num(fs, "i3"));
  const rows = rigidBody(inertia, Float64Array.from(nums(fs, "w0")), num(fs, "t"), 1e-3);
  const t = column(rows, 7, 0);
  plot(canvas, t, [1, 2, 3].map((k) => column(rows, 7, k)));
  out.textContent = `nodes ${t.length}   energy drift ${drift(column(rows, 7, 4))}   casimir drift ${drift(column(rows, 7, 6))}`;
});

guard(document.getElementById("wong"), (fs, canvas, out) => {
  const rows = wongOrbit(num(fs, "b"), Float64Array.from(nums(fs, "s")), num(fs, "t"), 1e-3);
  plot(canvas, column(rows, 11, 1), [column(rows, 11, 2)], true);
  out.textContent = `energy drift ${drift(column(rows, 11, 8))}   |v|^2 drift ${drift(column(rows, 11, 10))}`;
});

guard(document.getElementById("routh"), (fs, canvas, out) => {
  const res = routh(num(fs, "x"), num(fs, "r0"), num(fs, "rd"), num(fs, "t"), 1e-3);
  const rows = res.subarray(0, res.length - 1);
  plot(canvas, column(rows, 3, 0), [column(rows, 3, 1)]);
  out.textContent = `max |r_full - r_routh| = ${res[res.length - 1].toExponential(2)}`;
});
