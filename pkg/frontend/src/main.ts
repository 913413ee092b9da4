import { Client } from "./api.js";
import { AnnotateView } from "./annotate.js";
import { ReconstructionView } from "./reconstruction.js";

function status(msg: string): void {
  const bar = document.getElementById("status-bar");
  if (bar) bar.textContent = msg;
}

async function boot(): Promise<void> {
  const client = new Client("");
  const annotateRoot = document.getElementById("annotate-root") as HTMLElement;
  const reconRoot = document.getElementById("reconstruction-root") as HTMLElement;
  const annotate = new AnnotateView(client, annotateRoot, status);
  const reconstruction = new ReconstructionView(client, reconRoot, status);

  const tabs = document.querySelectorAll<HTMLButtonElement>(".tab-button");
  tabs.forEach((button) => {
    button.onclick = () => {
      tabs.forEach((other) => other.classList.remove("active"));
      button.classList.add("active");
      annotateRoot.style.display = button.dataset.tab === "annotate" ? "" : "none";
      reconRoot.style.display = button.dataset.tab === "reconstruction" ? "" : "none";
    };
  });
  reconRoot.style.display = "none";

  try {
    await annotate.init();
    await reconstruction.init();
    status("ready");
  } catch (err) {
    status(`failed to load project: ${String(err)}`);
  }
}

void boot();
