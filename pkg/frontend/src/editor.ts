/** Drag-and-drop workflow editor.
 *
 * A palette offers the four node kinds; dragging a node body moves it,
 * dragging from a node's port draws an edge; validation badges render
 * inline on offending nodes and never block editing (saving a broken
 * graph is refused with the violations listed).
 */

import { CanvasDocument, type CanvasNode, type NodeKind } from "./canvas.js";
import { badgesByNode, validateCanvas, type Violation } from "./validate.js";

const NODE_W = 120;
const NODE_H = 48;
const KINDS: NodeKind[] = ["INPUT", "OUTPUT", "PROCESS", "MODEL_CALL"];

type DragState =
  | { mode: "move"; id: string; dx: number; dy: number }
  | { mode: "edge"; from: string }
  | null;

export class WorkflowEditor {
  canvas: CanvasDocument;
  readonly root: HTMLElement;
  private svg: SVGSVGElement;
  private drag: DragState = null;
  selectedNode: string | null = null;
  onSelect: ((id: string | null) => void) | null = null;

  constructor(container: HTMLElement, canvas = new CanvasDocument()) {
    this.canvas = canvas;
    this.root = container;
    container.classList.add("wf-editor");

    const palette = document.createElement("div");
    palette.className = "wf-palette";
    for (const kind of KINDS) {
      const button = document.createElement("button");
      button.textContent = kind;
      button.dataset["kind"] = kind;
      button.addEventListener("click", () => {
        this.addFromPalette(kind);
      });
      palette.appendChild(button);
    }
    container.appendChild(palette);

    this.svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    this.svg.setAttribute("class", "wf-canvas");
    this.svg.setAttribute("width", "900");
    this.svg.setAttribute("height", "600");
    container.appendChild(this.svg);

    this.svg.addEventListener("mousemove", (event) => this.onMouseMove(event));
    this.svg.addEventListener("mouseup", (event) => this.onMouseUp(event));
    this.render();
  }

  /** Drop a new node of `kind` onto the canvas (palette gesture). */
  addFromPalette(kind: NodeKind, at?: { x: number; y: number }): CanvasNode {
    const position = at ?? this.nextFreeSpot();
    const node = this.canvas.addNode(kind, position);
    this.render();
    return node;
  }

  private nextFreeSpot(): { x: number; y: number } {
    const index = this.canvas.nodes.size;
    return { x: 60 + (index % 5) * 170, y: 60 + Math.floor(index / 5) * 110 };
  }

  /** Edge-drawing gesture: press on a source port, release on a target. */
  startEdgeDrag(from: string): void {
    this.drag = { mode: "edge", from };
  }

  completeEdgeDrag(to: string): boolean {
    if (this.drag?.mode !== "edge") return false;
    const from = this.drag.from;
    this.drag = null;
    if (from === to || this.canvas.hasEdge(from, to)) return false;
    this.canvas.connect(from, to);
    this.render();
    return true;
  }

  setNodeMeta(
    id: string,
    meta: Partial<Pick<CanvasNode, "requiredTags" | "difficulty" | "novel" | "rationale">>,
  ): void {
    this.canvas.setMeta(id, meta);
    this.render();
  }

  violations(): Violation[] {
    return validateCanvas(this.canvas);
  }

  /** Current inline badge text per node id ("OK" when clean). */
  badges(): Map<string, string[]> {
    return badgesByNode(this.violations());
  }

  /** The saved `.wf.json` text; refuses structurally broken graphs. */
  save(): string {
    const violations = this.violations();
    if (violations.length > 0) {
      const summary = violations.map((v) => `${v.code}{${v.subjects.join(",")}}`).join("; ");
      throw new Error(`cannot save invalid workflow: ${summary}`);
    }
    return this.canvas.save();
  }

  load(text: string): void {
    this.canvas = CanvasDocument.load(text);
    this.selectedNode = null;
    this.render();
  }

  // -- pointer handling -------------------------------------------------

  private onMouseMove(event: MouseEvent): void {
    if (this.drag?.mode === "move") {
      this.canvas.moveNode(this.drag.id, {
        x: event.offsetX - this.drag.dx,
        y: event.offsetY - this.drag.dy,
      });
      this.render();
    }
  }

  private onMouseUp(_event: MouseEvent): void {
    if (this.drag?.mode === "move") this.drag = null;
  }

  render(): void {
    while (this.svg.firstChild) this.svg.removeChild(this.svg.firstChild);
    const badges = this.badges();

    for (const edge of this.canvas.edges) {
      const from = this.canvas.nodes.get(edge.from);
      const to = this.canvas.nodes.get(edge.to);
      if (!from || !to) continue;
      const line = document.createElementNS("http://www.w3.org/2000/svg", "line");
      line.setAttribute("x1", String(from.x + NODE_W));
      line.setAttribute("y1", String(from.y + NODE_H / 2));
      line.setAttribute("x2", String(to.x));
      line.setAttribute("y2", String(to.y + NODE_H / 2));
      line.setAttribute("class", "wf-edge");
      line.dataset["edge"] = `${edge.from}->${edge.to}`;
      line.addEventListener("dblclick", () => {
        this.canvas.removeEdge(edge.from, edge.to);
        this.render();
      });
      this.svg.appendChild(line);
    }

    for (const node of this.canvas.nodes.values()) {
      const group = document.createElementNS("http://www.w3.org/2000/svg", "g");
      group.setAttribute("transform", `translate(${node.x},${node.y})`);
      group.dataset["node"] = node.id;

      const rect = document.createElementNS("http://www.w3.org/2000/svg", "rect");
      rect.setAttribute("width", String(NODE_W));
      rect.setAttribute("height", String(NODE_H));
      rect.setAttribute("rx", "6");
      rect.setAttribute("class", `wf-node wf-node-${node.kind.toLowerCase()}`);
      rect.addEventListener("mousedown", (event) => {
        this.drag = { mode: "move", id: node.id, dx: event.offsetX - node.x, dy: event.offsetY - node.y };
        this.selectedNode = node.id;
        this.onSelect?.(node.id);
      });
      group.appendChild(rect);

      const label = document.createElementNS("http://www.w3.org/2000/svg", "text");
      label.setAttribute("x", "8");
      label.setAttribute("y", "20");
      label.textContent = `${node.id} (${node.kind})`;
      group.appendChild(label);

      const port = document.createElementNS("http://www.w3.org/2000/svg", "circle");
      port.setAttribute("cx", String(NODE_W));
      port.setAttribute("cy", String(NODE_H / 2));
      port.setAttribute("r", "6");
      port.setAttribute("class", "wf-port");
      port.dataset["port"] = node.id;
      port.addEventListener("mousedown", (event) => {
        event.stopPropagation();
        this.startEdgeDrag(node.id);
      });
      group.appendChild(port);

      rect.addEventListener("mouseup", () => {
        this.completeEdgeDrag(node.id);
      });

      const nodeBadges = badges.get(node.id) ?? [];
      const badge = document.createElementNS("http://www.w3.org/2000/svg", "text");
      badge.setAttribute("x", "8");
      badge.setAttribute("y", "38");
      badge.setAttribute(
        "class",
        nodeBadges.length > 0 ? "wf-badge wf-badge-violation" : "wf-badge wf-badge-ok",
      );
      badge.dataset["badge"] = node.id;
      badge.textContent = nodeBadges.length > 0 ? nodeBadges.join(",") : "OK";
      group.appendChild(badge);

      this.svg.appendChild(group);
    }
  }
}
