//! Execution of the built-in tools against a [`FixtureStore`].
//!
//! Observations are rendered as `Key: value; Key: value` text. Lookups that
//! miss produce a `not_found` observation rather than an error so the agent
//! loop can reason about the gap.

use std::sync::LazyLock;

use regex::Regex;

use super::fixtures::{FixtureStore, HouseRecord, PolicyKind, PriceSeries, PriceSubject};
use super::{names, Observation, ObservationStatus, ToolCall};
use crate::memory::ConversationHistory;

/// Prefix of every `not_found` observation.
pub const NO_RECORD_FOUND: &str = "No record found";

/// Maximum number of listings returned by Recommend Listings.
const MAX_RECOMMENDATIONS: usize = 3;

fn ok(tool: &str, text: String) -> Observation {
    Observation {
        tool_name: tool.to_string(),
        formatted_text: text,
        status: ObservationStatus::Ok,
    }
}

fn not_found(tool: &str, param: &str, value: &str) -> Observation {
    Observation {
        tool_name: tool.to_string(),
        formatted_text: format!("{NO_RECORD_FOUND} for {param} {value}."),
        status: ObservationStatus::NotFound,
    }
}

fn tool_error(tool: &str, message: String) -> Observation {
    Observation {
        tool_name: tool.to_string(),
        formatted_text: format!("Tool error: {message}"),
        status: ObservationStatus::ToolError,
    }
}

/// Formats a number with at most two decimals, dropping trailing zeros.
pub(crate) fn fmt_num(value: f64) -> String {
    let s = format!("{value:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

fn millions(yuan: u64) -> String {
    format!("{} million yuan", fmt_num(yuan as f64 / 1_000_000.0))
}

fn percent_change(first: f64, last: f64) -> Option<String> {
    if first == 0.0 || !first.is_finite() || !last.is_finite() {
        return None;
    }
    let pct = (last - first) / first * 100.0;
    let sign = if pct > 0.0 { "+" } else { "" };
    Some(format!("{sign}{}%", fmt_num(pct)))
}

fn render_house(h: &HouseRecord) -> String {
    format!(
        "House ID: {}; House Name: {}; House Status: {}; Type of Property: {}; \
         Number of Bedrooms: {}; Number of Halls: {}; Number of Bathrooms: {}; \
         Area: {} square meters; Orientation: {}; Floor: {}; Total Floors: {}; \
         Elevator: {}; Construction Year: {}; Qualifies for \"Two Years\": {}; \
         Qualifies for \"Five Years\": {}; House Price: {}; Community ID: {}; \
         Layout ID: {}; School District: {}; Renovation: {}",
        h.house_id,
        h.name,
        h.status,
        h.property_type,
        h.bedrooms,
        h.halls,
        h.bathrooms,
        fmt_num(h.area_sqm),
        h.orientation,
        h.floor,
        h.total_floors,
        yes_no(h.elevator),
        h.construction_year,
        yes_no(h.two_years),
        yes_no(h.five_years),
        millions(h.price_yuan),
        h.resblock_id,
        h.frame_id,
        yes_no(h.school_district),
        h.renovation,
    )
}

fn render_series(
    label: &str,
    id: &str,
    unit: &str,
    series: &PriceSeries,
) -> Result<String, String> {
    let (first, last) = match (series.points.first(), series.points.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(format!("price series for {id} is empty")),
    };
    let change = percent_change(first.price, last.price)
        .ok_or_else(|| format!("price series for {id} starts at zero"))?;
    let monthly: Vec<String> = series
        .points
        .iter()
        .map(|p| format!("{}: {}", p.month, fmt_num(p.price)))
        .collect();
    Ok(format!(
        "{label}: {id}; Period: {} to {}; Start Price: {} {unit}; End Price: {} {unit}; Change: {change}; Monthly Prices: {}",
        first.month,
        last.month,
        fmt_num(first.price),
        fmt_num(last.price),
        monthly.join(", ")
    ))
}

/// Budget ceiling and bedroom count inferred from the user's messages.
#[derive(Debug, Default, Clone, PartialEq)]
pub(crate) struct ListingNeeds {
    pub max_price_yuan: Option<u64>,
    pub bedrooms: Option<u32>,
}

static BUDGET: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(?:under|below|less than|within|at most|no more than|up to|budget(?:\s+is|\s+of)?(?:\s+about|\s+around)?)\s*(\d+(?:\.\d+)?)\s*(million|m\b|万)",
    )
    .expect("budget pattern")
});

static BEDROOMS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(\d+|one|two|three|four|five)[\s-]*(?:bedrooms?|beds?|br)\b")
        .expect("bedroom pattern")
});

fn word_number(s: &str) -> Option<u32> {
    match s.to_ascii_lowercase().as_str() {
        "one" => Some(1),
        "two" => Some(2),
        "three" => Some(3),
        "four" => Some(4),
        "five" => Some(5),
        other => other.parse().ok(),
    }
}

/// Scans user messages oldest to newest; the latest mention wins.
pub(crate) fn infer_needs<'a>(messages: impl IntoIterator<Item = &'a str>) -> ListingNeeds {
    let mut needs = ListingNeeds::default();
    for text in messages {
        for cap in BUDGET.captures_iter(text) {
            let amount: f64 = cap[1].parse().unwrap_or(0.0);
            let scale = if &cap[2] == "万" {
                10_000.0
            } else {
                1_000_000.0
            };
            if amount > 0.0 {
                needs.max_price_yuan = Some((amount * scale).round() as u64);
            }
        }
        for cap in BEDROOMS.captures_iter(text) {
            if let Some(n) = word_number(&cap[1]) {
                needs.bedrooms = Some(n);
            }
        }
    }
    needs
}

fn recommend(store: &FixtureStore, history: Option<&ConversationHistory>) -> Observation {
    let tool = names::RECOMMEND_LISTINGS;
    let messages: Vec<&str> = history
        .map(|h| h.turns().iter().map(|t| t.query.as_str()).collect())
        .unwrap_or_default();
    let needs = infer_needs(messages);
    let mut candidates: Vec<&HouseRecord> = store
        .houses()
        .filter(|h| h.status == "Active")
        .filter(|h| needs.max_price_yuan.is_none_or(|max| h.price_yuan <= max))
        .filter(|h| needs.bedrooms.is_none_or(|n| h.bedrooms == n))
        .collect();
    candidates.sort_by(|a, b| {
        a.price_yuan
            .cmp(&b.price_yuan)
            .then_with(|| a.house_id.cmp(&b.house_id))
    });
    candidates.truncate(MAX_RECOMMENDATIONS);

    let mut criteria = Vec::new();
    if let Some(max) = needs.max_price_yuan {
        criteria.push(format!("budget up to {}", millions(max)));
    }
    if let Some(n) = needs.bedrooms {
        criteria.push(format!("{n} bedrooms"));
    }
    if candidates.is_empty() {
        let wanted = if criteria.is_empty() {
            "any active listing".to_string()
        } else {
            criteria.join(", ")
        };
        return Observation {
            tool_name: tool.to_string(),
            formatted_text: format!("{NO_RECORD_FOUND} for listings matching {wanted}."),
            status: ObservationStatus::NotFound,
        };
    }
    let listings: Vec<String> = candidates
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let mut reasons = Vec::new();
            if let Some(max) = needs.max_price_yuan {
                reasons.push(format!(
                    "priced at {}, within the budget of {}",
                    millions(h.price_yuan),
                    millions(max)
                ));
            }
            if let Some(n) = needs.bedrooms {
                reasons.push(format!("has the requested {n} bedrooms"));
            }
            if reasons.is_empty() {
                reasons.push("among the lowest-priced active listings".to_string());
            }
            if h.school_district {
                reasons.push("in a school district".to_string());
            }
            format!(
                "Listing {}: House ID: {}; House Name: {}; Number of Bedrooms: {}; Area: {} square meters; House Price: {}; Reason: {}",
                i + 1,
                h.house_id,
                h.name,
                h.bedrooms,
                fmt_num(h.area_sqm),
                millions(h.price_yuan),
                reasons.join(", ")
            )
        })
        .collect();
    ok(tool, listings.join(" | "))
}

fn value_report(store: &FixtureStore, house_id: &str) -> Observation {
    let tool = names::VALUE_REPORT;
    let Some(h) = store.house(house_id) else {
        return not_found(tool, "house_id", house_id);
    };
    let Some(community) = store.community(&h.resblock_id) else {
        return tool_error(tool, format!("community {} missing", h.resblock_id));
    };
    let unit_price = if h.area_sqm > 0.0 {
        (h.price_yuan as f64 / h.area_sqm).round()
    } else {
        return tool_error(tool, format!("house {house_id} has zero area"));
    };
    let trend = store
        .price_series(PriceSubject::House, house_id)
        .and_then(|s| match (s.points.first(), s.points.last()) {
            (Some(f), Some(l)) => percent_change(f.price, l.price),
            _ => None,
        })
        .unwrap_or_else(|| "N/A".to_string());
    let mut highlights = vec![format!("built in {}", h.construction_year)];
    highlights.push(format!("{} orientation", h.orientation));
    if h.elevator {
        highlights.push("elevator building".to_string());
    }
    if h.school_district {
        highlights.push("school district".to_string());
    }
    ok(
        tool,
        format!(
            "Value Report Card: House ID: {}; House Name: {}; Estimated Value: {}; Unit Price: {} yuan per square meter; Community Average: {} yuan per square meter; Price Change: {}; Highlights: {}; Contact: Leave your phone number or add me on WeChat to receive the full report.",
            h.house_id,
            h.name,
            millions(h.price_yuan),
            fmt_num(unit_price),
            community.avg_price_per_sqm,
            trend,
            highlights.join(", ")
        ),
    )
}

/// Runs a validated call. The store is only read.
pub fn execute(
    store: &FixtureStore,
    call: &ToolCall,
    history: Option<&ConversationHistory>,
) -> Observation {
    let tool = call.tool_name.as_str();
    let arg = |name: &str| call.args.get(name).map(|v| v.trim()).unwrap_or("");
    match tool {
        names::CONSULTANT_INFORMATION => {
            let id = arg("agent_ucid");
            match store.consultant(id) {
                Some(c) => ok(
                    tool,
                    format!(
                        "Name: {}; Phone: {}; WeChat: {}; Rank: {}; Performance: {} deals closed; Rating: {}",
                        c.name,
                        c.phone,
                        c.wechat,
                        c.rank,
                        c.deals_closed,
                        fmt_num(c.rating)
                    ),
                ),
                None => not_found(tool, "agent_ucid", id),
            }
        }
        names::HOUSE_INFORMATION => {
            let id = arg("house_id");
            match store.house(id) {
                Some(h) => ok(tool, render_house(h)),
                None => not_found(tool, "house_id", id),
            }
        }
        names::COMMUNITY_INFORMATION => {
            let id = arg("resblock_id");
            match store.community(id) {
                Some(c) => ok(
                    tool,
                    format!(
                        "Community ID: {}; Community Name: {}; Green Ratio: {}%; Property Management: {}; Building Type: {}; Subway: {}; Schools: {}; Medical: {}; Average Price: {} yuan per square meter",
                        c.resblock_id,
                        c.name,
                        fmt_num(c.green_ratio * 100.0),
                        c.property_management,
                        c.building_type,
                        c.subway,
                        c.schools,
                        c.medical,
                        c.avg_price_per_sqm
                    ),
                ),
                None => not_found(tool, "resblock_id", id),
            }
        }
        names::HOUSE_LAYOUT_ANALYSIS => {
            let id = arg("frame_id");
            match store.layout(id) {
                Some(l) => ok(
                    tool,
                    format!(
                        "Layout ID: {}; Summary: {}; Strengths: {}; Weaknesses: {}",
                        l.frame_id,
                        l.summary,
                        l.strengths.join(", "),
                        l.weaknesses.join(", ")
                    ),
                ),
                None => not_found(tool, "frame_id", id),
            }
        }
        names::HOUSE_PRICE_CHANGES | names::COMMUNITY_PRICE_CHANGES => {
            let (subject, param, label, unit) = if tool == names::HOUSE_PRICE_CHANGES {
                (PriceSubject::House, "house_id", "House ID", "(10k yuan)")
            } else {
                (
                    PriceSubject::Community,
                    "resblock_id",
                    "Community ID",
                    "(yuan per square meter)",
                )
            };
            let id = arg(param);
            match store.price_series(subject, id) {
                Some(series) => match render_series(label, id, unit, series) {
                    Ok(text) => ok(tool, text),
                    Err(message) => tool_error(tool, message),
                },
                None => not_found(tool, param, id),
            }
        }
        names::COMMUNITY_TRANSACTIONS => {
            let id = arg("resblock_id");
            let deals = store.transactions(id);
            if store.community(id).is_none() || deals.is_empty() {
                return not_found(tool, "resblock_id", id);
            }
            let rows: Vec<String> = deals
                .iter()
                .map(|t| {
                    format!(
                        "{}: {}, {} square meters, {}",
                        t.date,
                        t.layout,
                        fmt_num(t.area_sqm),
                        millions(t.total_price_yuan)
                    )
                })
                .collect();
            ok(
                tool,
                format!(
                    "Community ID: {id}; Recent Transactions: {}; Count: {}",
                    rows.join(", "),
                    deals.len()
                ),
            )
        }
        names::TAX_POLICY | names::LOAN_POLICY => {
            let kind = if tool == names::TAX_POLICY {
                PolicyKind::Tax
            } else {
                PolicyKind::Loan
            };
            let id = arg("city_id");
            match store.policy(id, kind) {
                Some(p) => ok(
                    tool,
                    format!(
                        "City ID: {}; Effective Date: {}; Policy: {}",
                        p.city_id,
                        p.effective_date,
                        p.points.join("; ")
                    ),
                ),
                None => not_found(tool, "city_id", id),
            }
        }
        names::MARKET_ANALYSIS => {
            let id = arg("city_id");
            match store.market_note(id) {
                Some(m) => ok(
                    tool,
                    format!(
                        "City ID: {}; City: {}; Period: {}; Average Listing Price: {} yuan per square meter; Monthly Transactions: {}; Trend: {}; Summary: {}",
                        m.city_id,
                        m.city_name,
                        m.period,
                        m.avg_listing_price_per_sqm,
                        m.monthly_transactions,
                        m.trend,
                        m.summary
                    ),
                ),
                None => not_found(tool, "city_id", id),
            }
        }
        names::RECOMMEND_LISTINGS => recommend(store, history),
        names::VALUE_REPORT => value_report(store, arg("house_id")),
        other => tool_error(other, format!("no executor for tool `{other}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::fixtures::{FixtureCollections, PricePoint};

    fn house_info(id: &str) -> Observation {
        let call = ToolCall::new(names::HOUSE_INFORMATION).arg("house_id", id);
        execute(&FixtureStore::canonical(), &call, None)
    }

    #[test]
    fn house_information_matches_reference_rendering() {
        let obs = house_info("1021111");
        assert_eq!(obs.status, ObservationStatus::Ok);
        assert!(obs.formatted_text.starts_with(
            "House ID: 1021111; House Name: Huarun 24 City Mansion, good lighting and view, quiet; \
             House Status: Active; Type of Property: Resale; Number of Bedrooms: 2; Number of Halls: 2; \
             Number of Bathrooms: 2; Area: 88 square meters; Orientation: South-North; Floor: 5; \
             Total Floors: 9; Elevator: Yes; Construction Year: 2020; Qualifies for \"Two Years\": No; \
             Qualifies for \"Five Years\": No; House Price: 1.94 million yuan"
        ));
    }

    #[test]
    fn missing_house_is_not_found() {
        let obs = house_info("1099999");
        assert_eq!(obs.status, ObservationStatus::NotFound);
        assert_eq!(obs.formatted_text, "No record found for house_id 1099999.");
    }

    #[test]
    fn price_change_percentage() {
        // Hand-computed: (110 - 100) / 100 = +10%.
        let mut c = FixtureCollections::default();
        c.price_series.push(PriceSeries {
            subject: PriceSubject::House,
            subject_id: "1".into(),
            points: vec![
                PricePoint {
                    month: "2023-01".into(),
                    price: 100.0,
                },
                PricePoint {
                    month: "2023-02".into(),
                    price: 110.0,
                },
            ],
        });
        c.price_series.push(PriceSeries {
            subject: PriceSubject::House,
            subject_id: "2".into(),
            points: vec![PricePoint {
                month: "2023-01".into(),
                price: 0.0,
            }],
        });
        let store = FixtureStore::from_collections(c).unwrap();
        let call = ToolCall::new(names::HOUSE_PRICE_CHANGES).arg("house_id", "1");
        let obs = execute(&store, &call, None);
        assert_eq!(obs.status, ObservationStatus::Ok);
        assert!(
            obs.formatted_text.contains("Change: +10%"),
            "{}",
            obs.formatted_text
        );
        let call = ToolCall::new(names::HOUSE_PRICE_CHANGES).arg("house_id", "2");
        assert_eq!(
            execute(&store, &call, None).status,
            ObservationStatus::ToolError
        );
    }

    #[test]
    fn needs_inference() {
        let needs = infer_needs(["I want two bedrooms", "budget is 2 million"]);
        assert_eq!(needs.bedrooms, Some(2));
        assert_eq!(needs.max_price_yuan, Some(2_000_000));
        let needs = infer_needs(["under 300万 please, 3-bedroom"]);
        assert_eq!(needs.max_price_yuan, Some(3_000_000));
        assert_eq!(needs.bedrooms, Some(3));
        assert_eq!(infer_needs(["hello"]), ListingNeeds::default());
    }

    #[test]
    fn recommend_listings_filters_and_orders_by_price() {
        let mut history = ConversationHistory::default();
        history
            .append_query("Looking for 2 bedrooms under 2 million")
            .unwrap();
        let call = ToolCall::new(names::RECOMMEND_LISTINGS);
        let obs = execute(&FixtureStore::canonical(), &call, Some(&history));
        assert_eq!(obs.status, ObservationStatus::Ok);
        let text = &obs.formatted_text;
        // 1021114 (1.48m) before 1021111 (1.94m); 1021117 is sold.
        let a = text.find("House ID: 1021114").unwrap();
        let b = text.find("House ID: 1021111").unwrap();
        assert!(a < b);
        assert!(!text.contains("1021117"));
        assert_eq!(text.matches("Reason:").count(), 2);
    }

    #[test]
    fn value_report_ends_with_contact_prompt() {
        let call = ToolCall::new(names::VALUE_REPORT).arg("house_id", "1021111");
        let obs = execute(&FixtureStore::canonical(), &call, None);
        assert!(obs
            .formatted_text
            .contains("Estimated Value: 1.94 million yuan"));
        assert!(obs.formatted_text.ends_with("receive the full report."));
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(1.94), "1.94");
        assert_eq!(fmt_num(88.0), "88");
        assert_eq!(fmt_num(-2.0202), "-2.02");
        assert_eq!(fmt_num(0.001), "0");
    }
}
