import init, { sceneNames, sceneSource, runScene, glassProbe } from "./pkg/cogfriction_demo.js";

const $ = (id) => document.getElementById(id);
const OCC_CYCLE = ["open", "blocked", "blocked_transparent"];
let scene = null;

function frictionColor(m) {
  const t = Math.max(0, Math.min(1, m));
  return `rgb(255, ${Math.round(255 - 165 * t)}, ${Math.round(255 - 215 * t)})`;
}

function draw(result) {
  const canvas = $("map");
  const ctx = canvas.getContext("2d");
  const size = Math.floor(Math.min(canvas.width / result.width, canvas.height / result.height));
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  result.cells.forEach((c, i) => {
    const x = (i % result.width) * size;
    const y = Math.floor(i / result.width) * size;
    if (c.occ === "blocked" && c.count === 0) ctx.fillStyle = "#333";
    else if (c.occ === "blocked_transparent" && c.count === 0) ctx.fillStyle = "#9cd";
    else ctx.fillStyle = c.count ? frictionColor(c.mean_c_f) : "#fff";
    ctx.fillRect(x, y, size, size);
    if (c.occ === "blocked_transparent") {
      ctx.strokeStyle = "#38a";
      ctx.strokeRect(x + 2, y + 2, size - 4, size - 4);
    }
    if (c.boundary) {
      ctx.fillStyle = "#0a0";
      ctx.fillRect(x, y + size - 4, size, 4);
    }
  });
  ctx.strokeStyle = "#ddd";
  for (let i = 0; i <= result.width; i++) ctx.strokeRect(i * size, 0, 0, result.height * size);
  for (let j = 0; j <= result.height; j++) ctx.strokeRect(0, j * size, result.width * size, 0);

  const centre = ([x, y]) => [x * size + size / 2, y * size + size / 2];
  for (const agent of result.agents) {
    ctx.strokeStyle = "#24c";
    ctx.lineWidth = 2;
    ctx.beginPath();
    agent.path.forEach((p, k) => (k ? ctx.lineTo(...centre(p)) : ctx.moveTo(...centre(p))));
    ctx.stroke();
    ctx.fillStyle = "#24c";
    for (const p of agent.activations) {
      ctx.beginPath();
      ctx.arc(...centre(p), size / 6, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
  ctx.lineWidth = 3;
  ctx.strokeStyle = "#c0f";
  for (const p of result.phantoms) ctx.strokeRect(p.position[0] * size + 1, p.position[1] * size + 1, size - 2, size - 2);
  ctx.lineWidth = 1;
  canvas.dataset.size = size;
}

function run() {
  $("run-error").textContent = "";
  try {
    const result = JSON.parse(runScene(JSON.stringify(scene), Number($("tau").value), Number($("seed").value) >>> 0));
    draw(result);
    $("phantoms").innerHTML = "";
    for (const p of result.phantoms) {
      const li = document.createElement("li");
      li.textContent = p.description;
      $("phantoms").appendChild(li);
    }
    if (!result.phantoms.length) $("phantoms").innerHTML = "<li>none</li>";
    $("narratives").textContent = result.narratives.join("\n") || "(no System 2 activations)";
  } catch (e) {
    $("run-error").textContent = e.message ?? String(e);
  }
}

function loadScene() {
  scene = JSON.parse(sceneSource($("scene").value));
  run();
}

function editCell(event) {
  const size = Number($("map").dataset.size);
  const x = Math.floor(event.offsetX / size);
  const y = Math.floor(event.offsetY / size);
  if (x >= scene.width || y >= scene.height) return;
  const cell = scene.cells[y * scene.width + x];
  cell.occ = OCC_CYCLE[(OCC_CYCLE.indexOf(cell.occ) + 1) % OCC_CYCLE.length];
  if (cell.occ === "blocked_transparent") {
    cell.signals = [{ ch: "material", tok: "glass", s: 0.9 }];
  } else if (cell.occ === "blocked") {
    cell.signals = [{ ch: "material", tok: "concrete", s: 0.8 }];
  } else {
    cell.signals = [];
  }
  run();
}

const analyticCurve = [];

function drawCurve(points) {
  const canvas = $("curve");
  const ctx = canvas.getContext("2d");
  const pad = 30;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  const at = (p, c) => [pad + p * w, pad + (1 - c) * h];
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w, h);
  ctx.fillStyle = "#444";
  ctx.fillText("p(passable)", pad + w / 2 - 30, canvas.height - 8);
  ctx.fillText("C_f", 4, pad + h / 2);
  ctx.fillText("0", pad - 10, pad + h + 4);
  ctx.fillText("1", pad - 10, pad + 4);
  ctx.strokeStyle = "#24c";
  ctx.beginPath();
  analyticCurve.forEach(([p, c], k) => (k ? ctx.lineTo(...at(p, c)) : ctx.moveTo(...at(p, c))));
  ctx.stroke();
  ctx.fillStyle = "rgb(255,90,40)";
  for (const [p, c] of points) {
    ctx.beginPath();
    ctx.arc(...at(p, c), 3, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function probe() {
  const p = Number($("p").value);
  const n = Number($("n").value) >>> 0;
  $("p-out").value = p.toFixed(2);
  const r = JSON.parse(glassProbe(p, n, 42));
  $("probe").textContent =
    `analytic C_f ${r.analytic_c_f.toFixed(3)}, sampled ${r.sampled_c_f.toFixed(3)} ` +
    `(passable share ${r.sampled_passable_share.toFixed(3)} over ${r.n} samples)`;
  const points = [];
  for (let k = 0; k <= 20; k++) {
    const q = k / 20;
    points.push([q, JSON.parse(glassProbe(q, n, 42 + k)).sampled_c_f]);
  }
  drawCurve(points);
}

await init();
for (let k = 0; k <= 100; k++) {
  analyticCurve.push([k / 100, JSON.parse(glassProbe(k / 100, 1, 0)).analytic_c_f]);
}
for (const name of JSON.parse(sceneNames())) {
  $("scene").add(new Option(name, name));
}
$("scene").addEventListener("change", loadScene);
$("reset").addEventListener("click", loadScene);
$("tau").addEventListener("input", () => {
  $("tau-out").value = Number($("tau").value).toFixed(2);
  run();
});
$("seed").addEventListener("change", run);
$("map").addEventListener("click", editCell);
$("p").addEventListener("input", probe);
$("n").addEventListener("change", probe);
loadScene();
probe();
