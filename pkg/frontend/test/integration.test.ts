// Scripted "browser" run against a live device: login -> vitals -> alarm ->
// ack (+conflict rollback in a second view) -> CIP edit (+TagWriteFailed) ->
// supplementary record; finishes with the endpoint-allowlist assertion.

import { afterAll, beforeAll, describe, expect, it, vi } from "vitest";
import { Window } from "happy-dom";

import { ALLOWED_ENDPOINTS, ApiClient } from "../src/api.js";
import { App, createApp } from "../src/app.js";
import { startStack, type Stack } from "./helpers/stack.js";

let stack: Stack;
const windows: Window[] = [];
const apps: App[] = [];

function browserView(): { root: HTMLElement; window: Window } {
  const window = new Window();
  window.document.body.innerHTML = '<div id="root"></div>';
  windows.push(window);
  return {
    root: window.document.getElementById("root") as unknown as HTMLElement,
    window,
  };
}

async function loginThroughForm(app: App, root: HTMLElement, user: string,
                                password: string): Promise<void> {
  const field = (sel: string) =>
    root.querySelector(sel) as unknown as HTMLInputElement;
  field('[data-test="user"]').value = user;
  field('[data-test="password"]').value = password;
  await app.doLogin();
}

const q = (root: HTMLElement, sel: string) =>
  root.querySelector(sel) as unknown as HTMLElement | null;

beforeAll(async () => {
  stack = await startStack();
});

afterAll(() => {
  for (const app of apps) app.destroy();
  for (const window of windows) window.close();
  stack?.stop();
});

describe("dashboard against the live device", () => {
  it("runs the full physician workflow", async () => {
    const { root } = browserView();
    const client = new ApiClient(stack.deviceUrl);
    const app = createApp(root, client, { pollMs: 0 });
    apps.push(app);

    // -- login ------------------------------------------------------------
    expect(q(root, '[data-test="login-panel"]')!.hasAttribute("hidden")).toBe(false);
    await loginThroughForm(app, root, "dr.pop", "parola1");
    expect(client.session?.role).toBe("physician");
    expect(q(root, '[data-test="main"]')!.hasAttribute("hidden")).toBe(false);

    // -- identify a patient -------------------------------------------------
    stack.seedTag(7, 42);
    await vi.waitFor(async () => {
      await app.refresh();
      expect(q(root, '[data-test="patient"]')?.textContent).toContain("42");
    }, { timeout: 15_000, interval: 200 });
    // the language selector follows the card's preferred language (ro)
    expect(q(root, '[data-test="title"]')!.textContent).toBe(
      "Panou dispozitiv CIP",
    );

    // -- vitals stream, chart data ------------------------------------------
    const base = 1700000000;
    await stack.emitVitals(
      Array.from({ length: 9 }, (_, i) =>
        `VITAL ecg1 HR ${70 + (i % 3) * 2} bpm ${base + i}`),
    );
    await stack.emitVitals([`VITAL t1 TEMP 39.2 C ${base + 9}`]);
    await vi.waitFor(async () => {
      await app.refresh();
      expect(app.state.vitals["HR"]?.length ?? 0).toBeGreaterThanOrEqual(9);
      expect(q(root, '[data-test="alarm"]')).toBeTruthy();
    }, { timeout: 15_000, interval: 200 });
    expect(q(root, '[data-test="vitals-latest"]')!.textContent).toContain("HR");
    const alarmRow = q(root, '[data-test="alarm"]')!;
    expect(alarmRow.getAttribute("data-acked")).toBe("false");
    expect(alarmRow.textContent).toContain("AbnormalHigh");

    // -- a second stale view for the ack conflict ---------------------------
    const second = browserView();
    const client2 = new ApiClient(stack.deviceUrl);
    const app2 = createApp(second.root, client2, { pollMs: 0 });
    apps.push(app2);
    await loginThroughForm(app2, second.root, "dr.pop", "parola1");
    await app2.refresh();
    expect(q(second.root, '[data-test="ack"]')).toBeTruthy();

    // -- acknowledge in the first view ----------------------------------------
    (q(root, '[data-test="ack"]') as unknown as HTMLButtonElement).click();
    await vi.waitFor(() => {
      const row = q(root, '[data-test="alarm"]')!;
      expect(row.getAttribute("data-acked")).toBe("true");
      expect(row.textContent).toContain("dr.pop");
    }, { timeout: 10_000 });

    // -- conflicting ack in the stale view rolls back without reverting -------
    (q(second.root, '[data-test="ack"]') as unknown as HTMLButtonElement).click();
    await vi.waitFor(() => {
      const banner = q(second.root, '[data-test="error"]');
      expect(banner?.getAttribute("data-code")).toBe("AlreadyAcknowledged");
      const row = q(second.root, '[data-test="alarm"]')!;
      expect(row.getAttribute("data-acked")).toBe("true");
      expect(q(second.root, '[data-test="ack"]')).toBeNull();
    }, { timeout: 10_000 });

    // -- edit the card ----------------------------------------------------------
    const blood = q(root, '[data-test="edit-blood"]') as unknown as HTMLSelectElement;
    blood.value = "A";
    q(root, '[data-test="cip-form"]')!.dispatchEvent(
      new (windows[0] as unknown as { Event: typeof Event }).Event("submit", {
        cancelable: true,
      }),
    );
    await vi.waitFor(() => {
      expect(q(root, '[data-test="patient"]')!.textContent).toContain("A Positive");
      expect(q(root, '[data-test="save-status"]')!.textContent).toBe("Card scris");
    }, { timeout: 10_000 });
    const onDevice = (await client.getPatient());
    expect(onDevice.blood_group).toBe("A");
    expect(onDevice.modifier_id).toBe("dr.pop");

    // -- supplementary record -----------------------------------------------------
    (q(root, '[data-test="fetch-supplementary"]') as unknown as HTMLButtonElement).click();
    await vi.waitFor(() => {
      expect(q(root, '[data-test="record-name"]')!.textContent).toContain(
        "Popescu, Ion",
      );
    }, { timeout: 10_000 });

    // -- tag removed mid-edit: failure banner, form preserved ---------------------
    stack.removeTag(7);
    const language = q(root, '[data-test="edit-language"]') as unknown as HTMLInputElement;
    language.value = "en";
    q(root, '[data-test="cip-form"]')!.dispatchEvent(
      new (windows[0] as unknown as { Event: typeof Event }).Event("submit", {
        cancelable: true,
      }),
    );
    await vi.waitFor(() => {
      const banners = Array.from(
        root.querySelectorAll('[data-test="error"]'),
      ) as unknown as HTMLElement[];
      expect(banners.some((b) => b.getAttribute("data-code") === "TagWriteFailed"))
        .toBe(true);
    }, { timeout: 10_000 });
    expect(language.value).toBe("en"); // user's attempt stays on screen
    expect((await client.getPatient()).language).toBe("ro"); // state unchanged

    // -- the UI talked only to the documented surface ------------------------------
    for (const used of [...client.calls, ...client2.calls]) {
      expect(
        ALLOWED_ENDPOINTS.some(
          (e) => e.method === used.method && e.pattern === used.pattern,
        ),
        `${used.method} ${used.pattern}`,
      ).toBe(true);
    }
    expect(client.calls.length).toBeGreaterThan(10);
  });
});
