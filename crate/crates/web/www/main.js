import init, { smooth, sketch, edges } from "./pkg/lineartist_web.js";

const MAX_SIDE = 320;
const input = document.getElementById("input");
const output = document.getElementById("output");
const status = document.getElementById("status");
const num = (id) => Number(document.getElementById(id).value);

for (const range of document.querySelectorAll("input[type=range]")) {
  const out = document.querySelector(`output[for="${range.id}"]`);
  const show = () => { out.textContent = range.value; };
  range.addEventListener("input", show);
  show();
}

function drawSample() {
  const ctx = input.getContext("2d");
  input.width = 320;
  input.height = 240;
  const sky = ctx.createLinearGradient(0, 0, 0, 240);
  sky.addColorStop(0, "#6fa8dc");
  sky.addColorStop(1, "#d9ecff");
  ctx.fillStyle = sky;
  ctx.fillRect(0, 0, 320, 240);
  ctx.fillStyle = "#f6c343";
  ctx.beginPath();
  ctx.arc(240, 60, 28, 0, 2 * Math.PI);
  ctx.fill();
  ctx.fillStyle = "#5b8c3a";
  ctx.beginPath();
  ctx.moveTo(0, 150);
  ctx.quadraticCurveTo(100, 90, 200, 150);
  ctx.quadraticCurveTo(260, 180, 320, 130);
  ctx.lineTo(320, 240);
  ctx.lineTo(0, 240);
  ctx.fill();
  ctx.fillStyle = "#c0504d";
  ctx.fillRect(110, 150, 70, 55);
  ctx.fillStyle = "#7f3f3f";
  ctx.beginPath();
  ctx.moveTo(100, 150);
  ctx.lineTo(145, 115);
  ctx.lineTo(190, 150);
  ctx.fill();
  ctx.fillStyle = "#fff4c2";
  ctx.fillRect(125, 165, 18, 16);
}

function loadFile(file) {
  const img = new Image();
  img.onload = () => {
    const scale = Math.min(1, MAX_SIDE / Math.max(img.width, img.height));
    input.width = Math.max(1, Math.round(img.width * scale));
    input.height = Math.max(1, Math.round(img.height * scale));
    input.getContext("2d").drawImage(img, 0, 0, input.width, input.height);
    URL.revokeObjectURL(img.src);
  };
  img.src = URL.createObjectURL(file);
}

function run(op) {
  const { width, height } = input;
  const rgba = input.getContext("2d").getImageData(0, 0, width, height).data;
  const t0 = performance.now();
  try {
    let px;
    if (op === "smooth") {
      px = smooth(rgba, width, height, num("lambda"), num("kappa"));
    } else if (op === "sketch") {
      px = sketch(rgba, width, height, num("directions"), num("len"), num("width"), num("sketch-lambda"));
    } else {
      px = edges(rgba, width, height, num("sigma"), num("low"), num("high"));
    }
    output.width = width;
    output.height = height;
    output.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(px), width, height), 0, 0);
    status.textContent = `${op}: ${(performance.now() - t0).toFixed(0)} ms`;
  } catch (e) {
    status.textContent = `${op} failed: ${e.message ?? e}`;
  }
}

await init();
drawSample();
document.getElementById("sample").addEventListener("click", drawSample);
document.getElementById("file").addEventListener("change", (e) => {
  if (e.target.files.length) loadFile(e.target.files[0]);
});
for (const button of document.querySelectorAll("button[data-op]")) {
  button.addEventListener("click", () => {
    status.textContent = `${button.dataset.op}...`;
    // let the status paint before the synchronous call blocks
    setTimeout(() => run(button.dataset.op), 10);
  });
}
