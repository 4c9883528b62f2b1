// Label bundles. The selector follows the card's preferred language and
// falls back to English for anything unknown.

export type Lang = "en" | "ro";

const BUNDLES: Record<Lang, Record<string, string>> = {
  en: {
    title: "CIP device dashboard",
    login: "Log in",
    logout: "Log out",
    user: "User",
    password: "Password",
    patient: "Patient",
    no_patient: "No patient identified",
    serial: "Card serial",
    blood_group: "Blood group",
    rh: "Rh",
    hiv_positive: "HIV positive",
    transmittable: "Transmittable disease",
    chronic: "Chronic disease",
    allergies: "Allergies",
    conditions: "Conditions",
    language: "Language",
    last_modified: "Last modified",
    modifier: "Modified by",
    vitals: "Vitals",
    alarms: "Alarms",
    no_alarms: "No alarms",
    acknowledge: "Acknowledge",
    acknowledged_by: "acknowledged by",
    edit_card: "Edit card",
    save: "Save to card",
    saved: "Card written",
    supplementary: "Server record",
    fetch_record: "Fetch from server",
    observations: "Observations",
    birth_year: "Year of birth",
    dismiss: "Dismiss",
    one_per_line: "one per line",
  },
  ro: {
    title: "Panou dispozitiv CIP",
    login: "Autentificare",
    logout: "Deconectare",
    user: "Utilizator",
    password: "Parola",
    patient: "Pacient",
    no_patient: "Niciun pacient identificat",
    serial: "Serie card",
    blood_group: "Grupa sanguina",
    rh: "Rh",
    hiv_positive: "HIV pozitiv",
    transmittable: "Boala transmisibila",
    chronic: "Boala cronica",
    allergies: "Alergii",
    conditions: "Afectiuni",
    language: "Limba",
    last_modified: "Ultima modificare",
    modifier: "Modificat de",
    vitals: "Semne vitale",
    alarms: "Alarme",
    no_alarms: "Nicio alarma",
    acknowledge: "Confirma",
    acknowledged_by: "confirmata de",
    edit_card: "Editare card",
    save: "Salveaza pe card",
    saved: "Card scris",
    supplementary: "Fisa de pe server",
    fetch_record: "Adu de pe server",
    observations: "Observatii",
    birth_year: "Anul nasterii",
    dismiss: "Inchide",
    one_per_line: "cate una pe linie",
  },
};

export function normalizeLang(code: string | undefined | null): Lang {
  return code === "ro" ? "ro" : "en";
}

export function t(lang: Lang, key: string): string {
  return BUNDLES[lang][key] ?? BUNDLES.en[key] ?? key;
}
