//! An in-memory table catalog backing the tool registry in tests: a
//! handful of toy tables with schema inspection, keyword/value search,
//! join discovery, and BM25 ranking. Every search returns at most 20
//! tables.

use std::sync::Arc;

use crate::exec::ToolRegistry;

const MAX_RESULTS: usize = 20;

#[derive(Debug, Clone)]
pub struct DemoTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Default)]
pub struct DemoCatalog {
    pub tables: Vec<DemoTable>,
}

fn table(name: &str, columns: &[&str], rows: &[&[&str]]) -> DemoTable {
    DemoTable {
        name: name.to_string(),
        columns: columns.iter().map(|c| c.to_string()).collect(),
        rows: rows
            .iter()
            .map(|r| r.iter().map(|v| v.to_string()).collect())
            .collect(),
    }
}

/// Roughly twenty small tables spanning retail, sports, geography, and
/// logistics.
pub fn demo_catalog() -> DemoCatalog {
    DemoCatalog {
        tables: vec![
            table("orders", &["order_id", "customer_id", "product_id", "quantity"], &[
                &["1", "c1", "p1", "2"],
                &["2", "c2", "p3", "1"],
            ]),
            table("customers", &["customer_id", "name", "city"], &[
                &["c1", "alice", "berlin"],
                &["c2", "bob", "madrid"],
            ]),
            table("products", &["product_id", "title", "manufacturer"], &[
                &["p1", "etherfast switch", "linksys"],
                &["p2", "memory card", "sony"],
                &["p3", "math adventure", "kutoka"],
            ]),
            table("suppliers", &["supplier_id", "name", "country"], &[
                &["s1", "acme", "germany"],
            ]),
            table("shipments", &["shipment_id", "order_id", "carrier"], &[
                &["sh1", "1", "dhl"],
            ]),
            table("carriers", &["carrier", "fleet_size"], &[&["dhl", "120"]]),
            table("inventory", &["product_id", "warehouse_id", "stock"], &[
                &["p1", "w1", "40"],
            ]),
            table("warehouses", &["warehouse_id", "city", "capacity"], &[
                &["w1", "berlin", "5000"],
            ]),
            table("cities", &["city", "country", "population"], &[
                &["berlin", "germany", "3600000"],
                &["madrid", "spain", "3200000"],
            ]),
            table("countries", &["country", "continent"], &[
                &["germany", "europe"],
                &["spain", "europe"],
            ]),
            table("employees", &["employee_id", "name", "department"], &[
                &["e1", "carol", "sales"],
            ]),
            table("departments", &["department", "budget"], &[&["sales", "90000"]]),
            table("salaries", &["employee_id", "amount"], &[&["e1", "52000"]]),
            table("teams", &["team_id", "team_name", "city"], &[
                &["t1", "lions", "berlin"],
            ]),
            table("matches", &["match_id", "team_id", "score"], &[
                &["m1", "t1", "3"],
            ]),
            table("players", &["player_id", "team_id", "name"], &[
                &["pl1", "t1", "dan"],
            ]),
            table("stadiums", &["stadium_id", "city", "capacity"], &[
                &["st1", "berlin", "74000"],
            ]),
            table("reviews", &["review_id", "product_id", "rating"], &[
                &["r1", "p2", "5"],
            ]),
            table("returns", &["return_id", "order_id", "reason"], &[
                &["rt1", "2", "damaged"],
            ]),
            table("invoices", &["invoice_id", "order_id", "amount"], &[
                &["i1", "1", "99.90"],
            ]),
        ],
    }
}

impl DemoCatalog {
    fn find(&self, name: &str) -> Option<&DemoTable> {
        let name = name.trim();
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn get_schema(&self, name: &str) -> String {
        match self.find(name) {
            Some(t) => format!("{}({})", t.name, t.columns.join(", ")),
            None => format!("Error: no table named {name:?}."),
        }
    }

    pub fn search_keywords(&self, keywords: &str) -> String {
        let terms: Vec<String> = keywords
            .split([',', ' '])
            .filter(|w| !w.trim().is_empty())
            .map(|w| w.trim().to_ascii_lowercase())
            .collect();
        let hits = self.tables.iter().filter(|t| {
            terms.iter().any(|term| {
                t.name.contains(term.as_str())
                    || t.columns.iter().any(|c| c.contains(term.as_str()))
            })
        });
        render_tables(hits.map(|t| t.name.clone()))
    }

    pub fn search_value(&self, value: &str) -> String {
        let needle = value.trim().to_ascii_lowercase();
        let hits = self.tables.iter().filter(|t| {
            t.rows
                .iter()
                .any(|row| row.iter().any(|cell| cell.to_ascii_lowercase() == needle))
        });
        render_tables(hits.map(|t| t.name.clone()))
    }

    /// Tables sharing at least one column name with the given table.
    pub fn joint_search(&self, name: &str) -> String {
        let Some(base) = self.find(name) else {
            return format!("Error: no table named {name:?}.");
        };
        let hits = self.tables.iter().filter(|t| {
            t.name != base.name && t.columns.iter().any(|c| base.columns.contains(c))
        });
        render_tables(hits.map(|t| t.name.clone()))
    }

    /// BM25 ranking of tables against a free-text query, over each
    /// table's name, columns, and cells.
    pub fn bm25(&self, query: &str) -> String {
        const K1: f64 = 1.2;
        const B: f64 = 0.75;
        let terms: Vec<String> = query
            .split_whitespace()
            .map(|w| w.to_ascii_lowercase())
            .collect();
        let docs: Vec<Vec<String>> = self
            .tables
            .iter()
            .map(|t| {
                let mut words: Vec<String> = vec![t.name.clone()];
                words.extend(t.columns.iter().cloned());
                for row in &t.rows {
                    words.extend(row.iter().map(|c| c.to_ascii_lowercase()));
                }
                words
            })
            .collect();
        let avg_len = docs.iter().map(Vec::len).sum::<usize>() as f64 / docs.len().max(1) as f64;
        let n = docs.len() as f64;
        let mut scored: Vec<(f64, &str)> = Vec::new();
        for (doc, t) in docs.iter().zip(&self.tables) {
            let mut score = 0.0;
            for term in &terms {
                let tf = doc.iter().filter(|w| *w == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs
                    .iter()
                    .filter(|d| d.iter().any(|w| w == term))
                    .count() as f64;
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                let denom = tf + K1 * (1.0 - B + B * doc.len() as f64 / avg_len);
                score += idf * tf * (K1 + 1.0) / denom;
            }
            if score > 0.0 {
                scored.push((score, &t.name));
            }
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        render_tables(scored.into_iter().map(|(_, name)| name.to_string()))
    }
}

fn render_tables(names: impl Iterator<Item = String>) -> String {
    let list: Vec<String> = names.take(MAX_RESULTS).collect();
    if list.is_empty() {
        "tables: (none)".to_string()
    } else {
        format!("tables: {}", list.join(", "))
    }
}

/// A tool registry over the demo catalog, exposing the standard five
/// catalog tools.
pub fn demo_registry() -> ToolRegistry {
    let catalog = Arc::new(demo_catalog());
    let mut registry = ToolRegistry::new();
    let c = catalog.clone();
    registry.register("GET_SCHEMA", move |args| Ok(c.get_schema(args)));
    let c = catalog.clone();
    registry.register("SEARCH_KEYWORDS", move |args| Ok(c.search_keywords(args)));
    let c = catalog.clone();
    registry.register("SEARCH_VALUE", move |args| Ok(c.search_value(args)));
    let c = catalog.clone();
    registry.register("JOINT_SEARCH", move |args| Ok(c.joint_search(args)));
    let c = catalog;
    registry.register("BM25", move |args| Ok(c.bm25(args)));
    registry
}

/// The tool list rendered for tool-loop prompts.
pub fn demo_tools_profile() -> String {
    [
        "- GET_SCHEMA(table): Return the schema of a table.",
        "- SEARCH_KEYWORDS(keywords): Return a list containing at most 20 tables whose names or columns match the keywords.",
        "- SEARCH_VALUE(value): Return a list containing at most 20 tables containing the value.",
        "- JOINT_SEARCH(table): Return a list containing at most 20 tables joinable with the table.",
        "- BM25(query): Return a list containing at most 20 tables ranked by relevance to the query.",
        "- SUBMIT(answer): Submit the final answer and finish.",
    ]
    .join("\n")
}
