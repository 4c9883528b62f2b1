// Dashboard wiring: login, patient summary, vitals chart, alarm center,
// CIP editor, supplementary panel. All state mutations flow through the
// ApiClient; rendering is plain DOM.

import {
  ApiClient,
  ApiError,
  type AlarmJson,
  type CardJson,
  type EhrRecordJson,
  type SampleJson,
} from "./api.js";
import { drawSeries } from "./chart.js";
import { normalizeLang, t, type Lang } from "./i18n.js";
import {
  makeError,
  mergeAlarms,
  mergeSamples,
  optimisticAck,
  settleAck,
  languageForCard,
  type AlarmRow,
  type UiError,
} from "./model.js";

export interface AppOptions {
  /** polling period; 0 disables the timer (tests drive refresh() directly) */
  pollMs?: number;
}

interface AppState {
  patient: CardJson | null;
  vitals: Record<string, SampleJson[]>;
  vitalsKind: string;
  alarms: AlarmRow[];
  supplementary: EhrRecordJson | null;
  supplementaryError: string | null;
  errors: UiError[];
  lang: Lang;
  langPinned: boolean;
  lastSaved: number | null;
}

const KINDS = ["HR", "TEMP", "SYS", "DIA"];

export class App {
  readonly client: ApiClient;
  readonly root: HTMLElement;
  readonly state: AppState = {
    patient: null,
    vitals: {},
    vitalsKind: "HR",
    alarms: [],
    supplementary: null,
    supplementaryError: null,
    errors: [],
    lang: "en",
    langPinned: false,
    lastSaved: null,
  };
  private timer: ReturnType<typeof setInterval> | null = null;
  private closeEvents: (() => void) | null = null;
  private editorSerial: number | null = null;

  constructor(root: HTMLElement, client: ApiClient, options: AppOptions = {}) {
    this.root = root;
    this.client = client;
    this.renderShell();
    const pollMs = options.pollMs ?? 1500;
    if (pollMs > 0) {
      this.timer = setInterval(() => {
        void this.refresh();
      }, pollMs);
    }
  }

  destroy(): void {
    if (this.timer) clearInterval(this.timer);
    if (this.closeEvents) this.closeEvents();
  }

  private tr(key: string): string {
    return t(this.state.lang, key);
  }

  private el<T extends HTMLElement>(selector: string): T {
    const found = this.root.querySelector<T>(selector);
    if (!found) throw new Error(`missing element ${selector}`);
    return found;
  }

  // rendering ---------------------------------------------------------------

  private renderShell(): void {
    this.root.innerHTML = `
      <header class="bar">
        <h1 data-test="title"></h1>
        <div class="row">
          <select data-test="lang">
            <option value="en">en</option>
            <option value="ro">ro</option>
          </select>
          <span data-test="session"></span>
          <button data-test="logout" hidden></button>
        </div>
      </header>
      <div data-test="errors"></div>
      <section data-test="login-panel" class="card">
        <h2 data-test="login-title"></h2>
        <form data-test="login-form">
          <label><span data-test="user-label"></span>
            <input name="user" data-test="user" autocomplete="username"></label>
          <label><span data-test="password-label"></span>
            <input name="password" type="password" data-test="password"></label>
          <button type="submit" data-test="login-btn"></button>
        </form>
      </section>
      <main data-test="main" hidden>
        <section class="card" data-test="patient-panel"></section>
        <section class="card">
          <h2 data-test="vitals-title"></h2>
          <select data-test="vitals-kind">
            ${KINDS.map((k) => `<option value="${k}">${k}</option>`).join("")}
          </select>
          <canvas data-test="chart" width="560" height="160"></canvas>
          <div data-test="vitals-latest" class="muted"></div>
        </section>
        <section class="card">
          <h2 data-test="alarms-title"></h2>
          <ul data-test="alarm-list"></ul>
        </section>
        <section class="card">
          <h2 data-test="editor-title"></h2>
          <div data-test="editor"></div>
        </section>
        <section class="card">
          <h2 data-test="supplementary-title"></h2>
          <button data-test="fetch-supplementary"></button>
          <div data-test="supplementary"></div>
        </section>
      </main>
    `;
    this.el<HTMLSelectElement>('[data-test="lang"]').addEventListener(
      "change",
      (ev) => {
        this.state.lang = normalizeLang((ev.target as HTMLSelectElement).value);
        this.state.langPinned = true;
        this.renderStatics();
        this.renderPatient();
        this.renderAlarms();
        this.renderEditor(true);
        this.renderSupplementary();
      },
    );
    this.el('[data-test="logout"]').addEventListener("click", () => {
      this.client.logout();
      this.state.patient = null;
      this.renderSession();
    });
    this.el<HTMLFormElement>('[data-test="login-form"]').addEventListener(
      "submit",
      (ev) => {
        ev.preventDefault();
        void this.doLogin();
      },
    );
    this.el<HTMLSelectElement>('[data-test="vitals-kind"]').addEventListener(
      "change",
      (ev) => {
        this.state.vitalsKind = (ev.target as HTMLSelectElement).value;
        this.renderVitals();
      },
    );
    this.el('[data-test="fetch-supplementary"]').addEventListener("click", () => {
      void this.doFetchSupplementary();
    });
    this.renderStatics();
    this.renderSession();
  }

  private renderStatics(): void {
    this.el('[data-test="title"]').textContent = this.tr("title");
    this.el('[data-test="login-title"]').textContent = this.tr("login");
    this.el('[data-test="user-label"]').textContent = this.tr("user");
    this.el('[data-test="password-label"]').textContent = this.tr("password");
    this.el('[data-test="login-btn"]').textContent = this.tr("login");
    this.el('[data-test="logout"]').textContent = this.tr("logout");
    this.el('[data-test="vitals-title"]').textContent = this.tr("vitals");
    this.el('[data-test="alarms-title"]').textContent = this.tr("alarms");
    this.el('[data-test="editor-title"]').textContent = this.tr("edit_card");
    this.el('[data-test="supplementary-title"]').textContent =
      this.tr("supplementary");
    this.el('[data-test="fetch-supplementary"]').textContent =
      this.tr("fetch_record");
  }

  private renderSession(): void {
    const session = this.client.session;
    this.el('[data-test="login-panel"]').toggleAttribute("hidden", !!session);
    this.el('[data-test="main"]').toggleAttribute("hidden", !session);
    this.el('[data-test="logout"]').toggleAttribute("hidden", !session);
    this.el('[data-test="session"]').textContent = session
      ? `${session.user} (${session.role})`
      : "";
  }

  private renderErrors(): void {
    const box = this.el('[data-test="errors"]');
    box.innerHTML = this.state.errors
      .map(
        (err) => `
        <div class="banner" data-test="error" data-code="${err.code}">
          <strong>${err.code}</strong> <span>${err.detail}</span>
          <button data-test="dismiss" data-id="${err.id}">${this.tr("dismiss")}</button>
        </div>`,
      )
      .join("");
    box.querySelectorAll<HTMLButtonElement>('[data-test="dismiss"]').forEach(
      (button) =>
        button.addEventListener("click", () => {
          this.state.errors = this.state.errors.filter(
            (err) => err.id !== Number(button.dataset.id),
          );
          this.renderErrors();
        }),
    );
  }

  private renderPatient(): void {
    const panel = this.el('[data-test="patient-panel"]');
    const card = this.state.patient;
    if (!card) {
      panel.innerHTML = `<h2>${this.tr("patient")}</h2>
        <p class="muted" data-test="no-patient">${this.tr("no_patient")}</p>`;
      return;
    }
    const rows: [string, string][] = [
      [this.tr("serial"), String(card.serial)],
      [this.tr("blood_group"), `${card.blood_group} ${card.rh}`],
      [this.tr("hiv_positive"), card.hiv_positive ? "+" : "-"],
      [this.tr("transmittable"), card.transmittable_disease ? "+" : "-"],
      [this.tr("chronic"), card.chronic_disease ? "+" : "-"],
      [this.tr("allergies"), card.allergies.join(", ") || "-"],
      [this.tr("conditions"), card.conditions.join(", ") || "-"],
      [this.tr("language"), card.language],
      [this.tr("modifier"), card.modifier_id || "-"],
    ];
    panel.innerHTML = `<h2>${this.tr("patient")}</h2>
      <table data-test="patient">${rows
        .map(
          ([label, value]) =>
            `<tr><td class="muted">${label}</td><td>${value}</td></tr>`,
        )
        .join("")}</table>`;
  }

  private renderVitals(): void {
    const samples = this.state.vitals[this.state.vitalsKind] ?? [];
    drawSeries(this.el<HTMLCanvasElement>('[data-test="chart"]'), samples);
    const latest = samples[samples.length - 1];
    this.el('[data-test="vitals-latest"]').textContent = latest
      ? `${this.state.vitalsKind} ${latest.value} @ ${latest.timestamp} (${samples.length})`
      : "-";
  }

  private renderAlarms(): void {
    const list = this.el('[data-test="alarm-list"]');
    if (this.state.alarms.length === 0) {
      list.innerHTML = `<li class="muted" data-test="no-alarms">${this.tr(
        "no_alarms",
      )}</li>`;
      return;
    }
    list.innerHTML = this.state.alarms
      .map((alarm) => {
        const status = alarm.acknowledged
          ? `<span data-test="acked">${this.tr("acknowledged_by")} ${
              alarm.acknowledged_by ?? "?"
            }</span>`
          : `<button data-test="ack" data-id="${alarm.alarm_id}">${this.tr(
              "acknowledge",
            )}</button>`;
        return `<li data-test="alarm" data-id="${alarm.alarm_id}"
          data-acked="${alarm.acknowledged}">
          <strong>${alarm.classification}</strong>
          ${alarm.sample.kind} ${alarm.sample.value} @ ${alarm.sample.timestamp}
          ${status}</li>`;
      })
      .join("");
    list.querySelectorAll<HTMLButtonElement>('[data-test="ack"]').forEach(
      (button) =>
        button.addEventListener("click", () => {
          void this.doAck(Number(button.dataset.id));
        }),
    );
  }

  private renderEditor(force = false): void {
    const card = this.state.patient;
    const editor = this.el('[data-test="editor"]');
    if (!card) {
      editor.innerHTML = `<p class="muted">${this.tr("no_patient")}</p>`;
      this.editorSerial = null;
      return;
    }
    if (!force && this.editorSerial === card.serial) {
      return; // keep user edits; re-render only on a new patient or save
    }
    this.editorSerial = card.serial;
    const bloodOptions = ["O", "A", "B", "AB", "Unknown"]
      .map(
        (value) =>
          `<option value="${value}" ${
            value === card.blood_group ? "selected" : ""
          }>${value}</option>`,
      )
      .join("");
    const rhOptions = ["Negative", "Positive", "Unknown"]
      .map(
        (value) =>
          `<option value="${value}" ${value === card.rh ? "selected" : ""}>${value}</option>`,
      )
      .join("");
    editor.innerHTML = `
      <form data-test="cip-form">
        <label>${this.tr("blood_group")}
          <select name="blood_group" data-test="edit-blood">${bloodOptions}</select>
        </label>
        <label>${this.tr("rh")}
          <select name="rh" data-test="edit-rh">${rhOptions}</select>
        </label>
        <label>${this.tr("hiv_positive")}
          <input type="checkbox" name="hiv_positive" ${card.hiv_positive ? "checked" : ""}>
        </label>
        <label>${this.tr("language")}
          <input name="language" data-test="edit-language" value="${card.language}" maxlength="2">
        </label>
        <label>${this.tr("allergies")} (${this.tr("one_per_line")})
          <textarea name="allergies" data-test="edit-allergies" rows="3">${card.allergies.join("\n")}</textarea>
        </label>
        <label>${this.tr("conditions")} (${this.tr("one_per_line")})
          <textarea name="conditions" data-test="edit-conditions" rows="3">${card.conditions.join("\n")}</textarea>
        </label>
        <button type="submit" data-test="save-cip">${this.tr("save")}</button>
        <span data-test="save-status" class="muted"></span>
      </form>`;
    editor
      .querySelector<HTMLFormElement>('[data-test="cip-form"]')!
      .addEventListener("submit", (ev) => {
        ev.preventDefault();
        void this.doSave();
      });
  }

  private renderSupplementary(): void {
    const box = this.el('[data-test="supplementary"]');
    if (this.state.supplementaryError) {
      box.innerHTML = `<p class="danger" data-test="supplementary-error">${this.state.supplementaryError}</p>`;
      return;
    }
    const record = this.state.supplementary;
    if (!record) {
      box.innerHTML = "";
      return;
    }
    const labels = record.labels ?? {};
    const obs = record.observations
      .map(
        (o) => `<tr><td>${o.kind}</td><td>${o.min}</td><td>${o.max}</td>
          <td>${o.mean}</td><td>${o.source}</td></tr>`,
      )
      .join("");
    box.innerHTML = `
      <p data-test="record-name"><strong>${record.display_name}</strong>
        (${labels["birth_year"] ?? this.tr("birth_year")}: ${record.birth_year})</p>
      <table data-test="record-observations">
        <tr><th>${labels["kind"] ?? "kind"}</th><th>${labels["min"] ?? "min"}</th>
          <th>${labels["max"] ?? "max"}</th><th>${labels["mean"] ?? "mean"}</th>
          <th>src</th></tr>
        ${obs}</table>`;
  }

  // actions -------------------------------------------------------------------

  private pushError(code: string, detail = ""): void {
    this.state.errors.push(makeError(code, detail));
    this.renderErrors();
  }

  async doLogin(): Promise<void> {
    const user = this.el<HTMLInputElement>('[data-test="user"]').value;
    const password = this.el<HTMLInputElement>('[data-test="password"]').value;
    try {
      await this.client.login(user, password);
    } catch (error) {
      this.pushError(
        error instanceof ApiError ? error.code : "NetworkError",
        String(error instanceof Error ? error.message : error),
      );
      return;
    }
    this.renderSession();
    this.closeEvents = this.client.openEvents(() => {
      void this.refresh();
    });
    await this.refresh();
  }

  async refresh(): Promise<void> {
    if (!this.client.session) return;
    try {
      let card: CardJson | null = null;
      try {
        card = await this.client.getPatient();
      } catch (error) {
        if (!(error instanceof ApiError) || error.status !== 404) throw error;
      }
      const previousSerial = this.state.patient?.serial ?? null;
      this.state.patient = card;
      if (card && !this.state.langPinned) {
        this.state.lang = languageForCard(card);
      }
      if (card?.serial !== previousSerial) {
        this.state.supplementary = null;
        this.state.supplementaryError = null;
        this.renderStatics();
        this.renderSupplementary();
      }
      const [alarms, samples] = await Promise.all([
        this.client.getAlarms(),
        this.client.getVitals(undefined, 60),
      ]);
      this.state.alarms = mergeAlarms(this.state.alarms, alarms);
      this.state.vitals = mergeSamples(this.state.vitals, samples);
    } catch (error) {
      this.pushError(
        error instanceof ApiError ? error.code : "NetworkError",
        String(error instanceof Error ? error.message : error),
      );
      return;
    }
    this.renderPatient();
    this.renderVitals();
    this.renderAlarms();
    this.renderEditor();
  }

  async doAck(id: number): Promise<void> {
    const by = this.client.session?.user ?? "?";
    this.state.alarms = optimisticAck(this.state.alarms, id, by);
    this.renderAlarms();
    try {
      const alarm = await this.client.ackAlarm(id);
      this.state.alarms = settleAck(this.state.alarms, id, {
        kind: "confirmed",
        alarm,
      });
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // somebody else acknowledged first; adopt the server's row
        let server: AlarmJson | null = null;
        try {
          server =
            (await this.client.getAlarms()).find((a) => a.alarm_id === id) ?? null;
        } catch {
          server = null;
        }
        this.state.alarms = settleAck(this.state.alarms, id, {
          kind: "conflict",
          server,
        });
        this.pushError(error.code, `alarm ${id}`);
      } else {
        this.state.alarms = settleAck(this.state.alarms, id, { kind: "failed" });
        this.pushError(
          error instanceof ApiError ? error.code : "NetworkError",
          `alarm ${id}`,
        );
      }
    }
    this.renderAlarms();
  }

  async doSave(): Promise<void> {
    const form = this.el<HTMLFormElement>('[data-test="cip-form"]');
    const field = <T extends HTMLElement>(name: string) =>
      form.querySelector<T>(`[name="${name}"]`)!;
    const lines = (name: string) =>
      field<HTMLTextAreaElement>(name)
        .value.split("\n")
        .map((line) => line.trim())
        .filter(Boolean);
    const patch = {
      blood_group: field<HTMLSelectElement>("blood_group").value,
      rh: field<HTMLSelectElement>("rh").value,
      hiv_positive: field<HTMLInputElement>("hiv_positive").checked,
      language: field<HTMLInputElement>("language").value,
      allergies: lines("allergies"),
      conditions: lines("conditions"),
    };
    try {
      const card = await this.client.putCip(patch);
      this.state.patient = card;
      this.renderPatient();
      this.renderEditor(true); // confirmed card becomes the new baseline
      this.el('[data-test="save-status"]').textContent = this.tr("saved");
    } catch (error) {
      // leave the form exactly as typed; just surface the cause
      this.pushError(
        error instanceof ApiError ? error.code : "NetworkError",
        error instanceof Error ? error.message : String(error),
      );
      this.el('[data-test="save-status"]').textContent = "";
    }
  }

  async doFetchSupplementary(): Promise<void> {
    try {
      const response = await this.client.postSupplementary();
      this.state.supplementary = response.record;
      this.state.supplementaryError = null;
    } catch (error) {
      this.state.supplementary = null;
      this.state.supplementaryError =
        error instanceof ApiError ? error.code : "NetworkError";
      this.pushError(this.state.supplementaryError, "supplementary");
    }
    this.renderSupplementary();
  }
}

export function createApp(
  root: HTMLElement,
  client: ApiClient,
  options: AppOptions = {},
): App {
  return new App(root, client, options);
}

// browser entry point: mount on #app when served from the device
const mount = typeof document !== "undefined" ? document.getElementById("app") : null;
if (mount) {
  const base = `${location.protocol}//${location.host}`;
  createApp(mount, new ApiClient(base));
}
