/** Bootstrap: session → lab list → lab dashboard. State lives server-side;
 * reloading the page reproduces every view from the API. */
import { Api, ApiError, LabInfo } from "./api.js";
import { clear, banner, el } from "./dom.js";
import { labsView, labView, loginView, LabScreen } from "./views.js";

export function mountApp(root: HTMLElement, api: Api = new Api()): void {
  let screen: LabScreen | null = null;

  function showLogin(): void {
    screen?.stop();
    screen = null;
    clear(root).append(loginView(api, showLabs));
  }

  function showLabs(): void {
    screen?.stop();
    screen = null;
    api.labs().then(
      (labs) => {
        clear(root).append(labsView(api, labs, showLab));
      },
      (e) => {
        if (e instanceof ApiError && e.status === 401) {
          api.logout();
          showLogin();
          return;
        }
        clear(root).append(banner("error", String(e)));
      },
    );
  }

  function showLab(lab: LabInfo): void {
    screen?.stop();
    screen = labView(api, lab, showLabs);
    clear(root).append(screen.root);
  }

  if (api.session) showLabs();
  else showLogin();
}

declare global {
  interface Window {
    leapMount?: typeof mountApp;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mountApp(document.getElementById("app") as HTMLElement);
}

if (typeof window !== "undefined") {
  window.leapMount = mountApp;
}
