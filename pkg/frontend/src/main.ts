/**
 * Browser entry point. Reads service origin and rater id from the URL and
 * mounts the app:
 *
 *   index.html?rater=rater-01                       (same-origin service)
 *   index.html?rater=rater-01&api=http://host:8731  (explicit service)
 *   ...&confidence=1                                (show AI confidence)
 */

import { StudyApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const raterId = params.get("rater");
const mount = document.getElementById("app");

if (mount === null) {
  throw new Error("index.html must contain an element with id \"app\"");
}

if (raterId === null) {
  const note = document.createElement("p");
  note.className = "missing-rater";
  note.textContent = "Add ?rater=<your rater id> to the URL to begin.";
  mount.appendChild(note);
} else {
  const app = new StudyApp(mount, {
    baseUrl: params.get("api") ?? "",
    raterId,
    showConfidence: params.get("confidence") === "1",
  });
  app.start();
}
