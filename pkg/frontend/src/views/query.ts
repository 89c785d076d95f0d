/** Agent search: substring query over the fleet, rows with state, kind and
 * autonomy level; selecting a row opens its activity timeline. */

import { ConsoleStore } from "../store.js";

export function renderQueryPanel(
  root: HTMLElement,
  store: ConsoleStore,
  query: string,
  onOpenTimeline: (instanceId: string) => void,
): void {
  root.innerHTML = "<h2>Agents</h2>";
  const search = document.createElement("input");
  search.type = "search";
  search.placeholder = "filter by id, kind, or scope";
  search.value = query;
  search.addEventListener("input", () =>
    renderRows(table, store, search.value, onOpenTimeline),
  );
  root.appendChild(search);

  const table = document.createElement("table");
  table.className = "agents";
  root.appendChild(table);
  renderRows(table, store, query, onOpenTimeline);
}

function renderRows(
  table: HTMLTableElement,
  store: ConsoleStore,
  query: string,
  onOpenTimeline: (instanceId: string) => void,
): void {
  const agents = store.agentsMatching(query);
  table.innerHTML =
    "<tr><th>instance</th><th>kind</th><th>state</th><th>autonomy</th><th>scope</th></tr>";
  if (agents.length === 0) {
    const row = table.insertRow();
    const cell = row.insertCell();
    cell.colSpan = 5;
    cell.className = "muted";
    cell.textContent = query ? `no agents match "${query}"` : "no agents yet";
    return;
  }
  for (const agent of agents) {
    const row = table.insertRow();
    row.className = "agent-row";
    const link = document.createElement("a");
    link.href = `#timeline/${agent.instance_id}`;
    link.textContent = agent.instance_id;
    link.addEventListener("click", (ev) => {
      ev.preventDefault();
      onOpenTimeline(agent.instance_id);
    });
    row.insertCell().appendChild(link);
    row.insertCell().textContent = agent.agent_kind;
    const stateCell = row.insertCell();
    stateCell.innerHTML = `<span class="chip state-${agent.state}">${agent.state}</span>`;
    row.insertCell().textContent = `L${agent.autonomy_level}`;
    row.insertCell().textContent = agent.scope;
  }
}
