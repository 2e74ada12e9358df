use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Event classification with fourteen categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiskType {
    PrivacyUnauthorizedContact,
    PrivacyUnauthorizedCollection,
    DataPhysicallyLost,
    DataMaliciousBreach,
    DataUnintentionalDisclosure,
    IdentityFraud,
    IndustrialControls,
    NetworkDisruption,
    Phishing,
    Skimming,
    ItConfiguration,
    ItProcessing,
    CyberExtortion,
    UndeterminedOther,
}

impl RiskType {
    pub const ALL: [RiskType; 14] = [
        RiskType::PrivacyUnauthorizedContact,
        RiskType::PrivacyUnauthorizedCollection,
        RiskType::DataPhysicallyLost,
        RiskType::DataMaliciousBreach,
        RiskType::DataUnintentionalDisclosure,
        RiskType::IdentityFraud,
        RiskType::IndustrialControls,
        RiskType::NetworkDisruption,
        RiskType::Phishing,
        RiskType::Skimming,
        RiskType::ItConfiguration,
        RiskType::ItProcessing,
        RiskType::CyberExtortion,
        RiskType::UndeterminedOther,
    ];

    /// Reference level of the risk-type dummies; it gets no column.
    pub const BASELINE: RiskType = RiskType::UndeterminedOther;

    pub fn canonical_name(self) -> &'static str {
        match self {
            RiskType::PrivacyUnauthorizedContact => "Privacy - Unauthorized Contact or Disclosure",
            RiskType::PrivacyUnauthorizedCollection => "Privacy - Unauthorized Data Collection",
            RiskType::DataPhysicallyLost => "Data - Physically Lost or Stolen",
            RiskType::DataMaliciousBreach => "Data - Malicious Breach",
            RiskType::DataUnintentionalDisclosure => "Data - Unintentional Disclosure",
            RiskType::IdentityFraud => "Identity - Fraudulent Use/Account Access",
            RiskType::IndustrialControls => "Industrial Controls and Operations",
            RiskType::NetworkDisruption => "Network/Website Disruption",
            RiskType::Phishing => "Phishing, Spoofing, Social Engineering",
            RiskType::Skimming => "Skimming, Physical Tampering",
            RiskType::ItConfiguration => "IT - Configuration/Implementation Errors",
            RiskType::ItProcessing => "IT - Processing Errors",
            RiskType::CyberExtortion => "Cyber Extortion",
            RiskType::UndeterminedOther => "Undetermined/Other",
        }
    }

    /// Short identifier used in column names and file names.
    pub fn slug(self) -> &'static str {
        match self {
            RiskType::PrivacyUnauthorizedContact => "privacy_contact",
            RiskType::PrivacyUnauthorizedCollection => "privacy_collection",
            RiskType::DataPhysicallyLost => "data_lost",
            RiskType::DataMaliciousBreach => "data_breach",
            RiskType::DataUnintentionalDisclosure => "data_disclosure",
            RiskType::IdentityFraud => "identity_fraud",
            RiskType::IndustrialControls => "industrial_controls",
            RiskType::NetworkDisruption => "network_disruption",
            RiskType::Phishing => "phishing",
            RiskType::Skimming => "skimming",
            RiskType::ItConfiguration => "it_configuration",
            RiskType::ItProcessing => "it_processing",
            RiskType::CyberExtortion => "cyber_extortion",
            RiskType::UndeterminedOther => "undetermined",
        }
    }

    /// Name of this type's dummy column, `None` for the baseline.
    pub fn dummy_column(self) -> Option<String> {
        (self != Self::BASELINE).then(|| format!("RT_{}", self.slug()))
    }
}

impl fmt::Display for RiskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

fn normalize(s: &str) -> String {
    let dashed: String = s
        .chars()
        .map(|c| match c {
            '\u{2010}'..='\u{2015}' => '-',
            c => c.to_ascii_lowercase(),
        })
        .collect();
    let collapsed = dashed.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.replace(" - ", "-").replace(" -", "-").replace("- ", "-")
}

impl FromStr for RiskType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = normalize(s);
        RiskType::ALL
            .into_iter()
            .find(|rt| normalize(rt.canonical_name()) == key || rt.slug() == key)
            .ok_or_else(|| Error::Domain(format!("unknown risk type `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourteen_distinct_categories() {
        let names: std::collections::BTreeSet<_> =
            RiskType::ALL.iter().map(|r| r.canonical_name()).collect();
        assert_eq!(names.len(), 14);
    }

    #[test]
    fn parsing_is_case_and_dash_insensitive() {
        assert_eq!(
            "identity – fraudulent use/account access".parse::<RiskType>().unwrap(),
            RiskType::IdentityFraud
        );
        assert_eq!(
            "PHISHING, SPOOFING, SOCIAL ENGINEERING".parse::<RiskType>().unwrap(),
            RiskType::Phishing
        );
        assert_eq!("cyber_extortion".parse::<RiskType>().unwrap(), RiskType::CyberExtortion);
        for rt in RiskType::ALL {
            assert_eq!(rt.canonical_name().parse::<RiskType>().unwrap(), rt);
        }
        assert!("Ransomware".parse::<RiskType>().is_err());
    }

    #[test]
    fn baseline_has_no_column() {
        assert_eq!(RiskType::UndeterminedOther.dummy_column(), None);
        assert_eq!(
            RiskType::CyberExtortion.dummy_column().as_deref(),
            Some("RT_cyber_extortion")
        );
    }
}
