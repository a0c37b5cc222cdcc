//! Synthetic record store backing the built-in tools.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::StoreError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseRecord {
    pub house_id: String,
    pub name: String,
    pub status: String,
    pub property_type: String,
    pub bedrooms: u32,
    pub halls: u32,
    pub bathrooms: u32,
    pub area_sqm: f64,
    pub orientation: String,
    pub floor: i32,
    pub total_floors: u32,
    pub elevator: bool,
    pub construction_year: u32,
    pub two_years: bool,
    pub five_years: bool,
    pub price_yuan: u64,
    pub resblock_id: String,
    pub frame_id: String,
    pub city_id: String,
    pub school_district: bool,
    pub renovation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub resblock_id: String,
    pub name: String,
    pub city_id: String,
    pub green_ratio: f64,
    pub property_management: String,
    pub building_type: String,
    pub subway: String,
    pub schools: String,
    pub medical: String,
    pub avg_price_per_sqm: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consultant {
    pub agent_ucid: String,
    pub name: String,
    pub phone: String,
    pub wechat: String,
    pub rank: String,
    pub deals_closed: u32,
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub frame_id: String,
    pub summary: String,
    pub strengths: Vec<String>,
    pub weaknesses: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Tax,
    Loan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub city_id: String,
    pub kind: PolicyKind,
    pub effective_date: String,
    pub points: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketNote {
    pub city_id: String,
    pub city_name: String,
    pub period: String,
    pub avg_listing_price_per_sqm: u64,
    pub monthly_transactions: u32,
    pub trend: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub resblock_id: String,
    pub date: String,
    pub layout: String,
    pub area_sqm: f64,
    pub total_price_yuan: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceSubject {
    House,
    Community,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub month: String,
    pub price: f64,
}

/// Monthly prices: total price in units of 10k yuan for houses, average
/// yuan per square meter for communities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub subject: PriceSubject,
    pub subject_id: String,
    pub points: Vec<PricePoint>,
}

/// Immutable keyed collections loaded from fixture files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureStore {
    pub(crate) houses: BTreeMap<String, HouseRecord>,
    pub(crate) communities: BTreeMap<String, Community>,
    pub(crate) consultants: BTreeMap<String, Consultant>,
    pub(crate) layouts: BTreeMap<String, Layout>,
    pub(crate) policies: BTreeMap<(String, PolicyKind), Policy>,
    pub(crate) market_notes: BTreeMap<String, MarketNote>,
    pub(crate) transactions: BTreeMap<String, Vec<Transaction>>,
    pub(crate) price_series: BTreeMap<(PriceSubject, String), PriceSeries>,
}

/// Raw collections as they appear on disk, before keying and validation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixtureCollections {
    pub houses: Vec<HouseRecord>,
    pub communities: Vec<Community>,
    pub consultants: Vec<Consultant>,
    pub layouts: Vec<Layout>,
    pub policies: Vec<Policy>,
    pub market: Vec<MarketNote>,
    pub transactions: Vec<Transaction>,
    pub price_series: Vec<PriceSeries>,
}

const FILES: [&str; 8] = [
    "houses",
    "communities",
    "consultants",
    "layouts",
    "policies",
    "market",
    "transactions",
    "price_series",
];

fn keyed<T, K: Ord + Clone + std::fmt::Debug>(
    collection: &str,
    items: Vec<T>,
    key: impl Fn(&T) -> K,
) -> Result<BTreeMap<K, T>, StoreError> {
    let mut map = BTreeMap::new();
    for item in items {
        let k = key(&item);
        if map.insert(k.clone(), item).is_some() {
            return Err(StoreError::Invalid(format!(
                "duplicate id {k:?} in {collection}"
            )));
        }
    }
    Ok(map)
}

impl FixtureStore {
    pub fn from_collections(c: FixtureCollections) -> Result<Self, StoreError> {
        let houses = keyed("houses", c.houses, |h| h.house_id.clone())?;
        let communities = keyed("communities", c.communities, |x| x.resblock_id.clone())?;
        let consultants = keyed("consultants", c.consultants, |x| x.agent_ucid.clone())?;
        let layouts = keyed("layouts", c.layouts, |x| x.frame_id.clone())?;
        let policies = keyed("policies", c.policies, |p| (p.city_id.clone(), p.kind))?;
        let market_notes = keyed("market", c.market, |m| m.city_id.clone())?;
        let price_series = keyed("price_series", c.price_series, |s| {
            (s.subject, s.subject_id.clone())
        })?;
        let mut transactions: BTreeMap<String, Vec<Transaction>> = BTreeMap::new();
        for t in c.transactions {
            transactions
                .entry(t.resblock_id.clone())
                .or_default()
                .push(t);
        }
        for house in houses.values() {
            if !communities.contains_key(&house.resblock_id) {
                return Err(StoreError::Invalid(format!(
                    "house {} references unknown community {}",
                    house.house_id, house.resblock_id
                )));
            }
        }
        let all_ids: Vec<&String> = houses
            .keys()
            .chain(communities.keys())
            .chain(consultants.keys())
            .chain(layouts.keys())
            .collect();
        for id in &all_ids {
            if !crate::tools::is_numeric_id(id) {
                return Err(StoreError::Invalid(format!("id `{id}` is not numeric")));
            }
        }
        Ok(Self {
            houses,
            communities,
            consultants,
            layouts,
            policies,
            market_notes,
            transactions,
            price_series,
        })
    }

    /// Loads `<name>.json` arrays from `dir`; absent files are empty collections.
    pub fn load_dir(dir: &Path) -> Result<Self, StoreError> {
        fn read<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>, StoreError> {
            let path = dir.join(format!("{name}.json"));
            match fs::read_to_string(&path) {
                Ok(text) => serde_json::from_str(&text).map_err(|e| StoreError::Parse {
                    path: path.display().to_string(),
                    message: e.to_string(),
                }),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
                Err(e) => Err(StoreError::Io {
                    path: path.display().to_string(),
                    source: e,
                }),
            }
        }
        if !dir.is_dir() {
            return Err(StoreError::Io {
                path: dir.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
            });
        }
        Self::from_collections(FixtureCollections {
            houses: read(dir, FILES[0])?,
            communities: read(dir, FILES[1])?,
            consultants: read(dir, FILES[2])?,
            layouts: read(dir, FILES[3])?,
            policies: read(dir, FILES[4])?,
            market: read(dir, FILES[5])?,
            transactions: read(dir, FILES[6])?,
            price_series: read(dir, FILES[7])?,
        })
    }

    /// The bundled synthetic fixture set.
    pub fn canonical() -> Self {
        fn parse<T: DeserializeOwned>(text: &str) -> Vec<T> {
            serde_json::from_str(text).expect("bundled fixture parses")
        }
        Self::from_collections(FixtureCollections {
            houses: parse(include_str!("../../fixtures/store/houses.json")),
            communities: parse(include_str!("../../fixtures/store/communities.json")),
            consultants: parse(include_str!("../../fixtures/store/consultants.json")),
            layouts: parse(include_str!("../../fixtures/store/layouts.json")),
            policies: parse(include_str!("../../fixtures/store/policies.json")),
            market: parse(include_str!("../../fixtures/store/market.json")),
            transactions: parse(include_str!("../../fixtures/store/transactions.json")),
            price_series: parse(include_str!("../../fixtures/store/price_series.json")),
        })
        .expect("bundled fixtures are consistent")
    }

    /// SHA-256 over a canonical serialization of every collection.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("{:?}", self).as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn house(&self, id: &str) -> Option<&HouseRecord> {
        self.houses.get(id)
    }

    pub fn houses(&self) -> impl Iterator<Item = &HouseRecord> {
        self.houses.values()
    }

    pub fn community(&self, id: &str) -> Option<&Community> {
        self.communities.get(id)
    }

    pub fn communities(&self) -> impl Iterator<Item = &Community> {
        self.communities.values()
    }

    pub fn consultant(&self, id: &str) -> Option<&Consultant> {
        self.consultants.get(id)
    }

    pub fn consultants(&self) -> impl Iterator<Item = &Consultant> {
        self.consultants.values()
    }

    pub fn layout(&self, id: &str) -> Option<&Layout> {
        self.layouts.get(id)
    }

    pub fn layouts(&self) -> impl Iterator<Item = &Layout> {
        self.layouts.values()
    }

    pub fn policy(&self, city_id: &str, kind: PolicyKind) -> Option<&Policy> {
        self.policies.get(&(city_id.to_string(), kind))
    }

    pub fn market_note(&self, city_id: &str) -> Option<&MarketNote> {
        self.market_notes.get(city_id)
    }

    pub fn transactions(&self, resblock_id: &str) -> &[Transaction] {
        self.transactions
            .get(resblock_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn price_series(&self, subject: PriceSubject, id: &str) -> Option<&PriceSeries> {
        self.price_series.get(&(subject, id.to_string()))
    }

    /// City ids that carry policy or market records.
    pub fn city_ids(&self) -> BTreeSet<String> {
        self.policies
            .keys()
            .map(|(c, _)| c.clone())
            .chain(self.market_notes.keys().cloned())
            .collect()
    }
}
