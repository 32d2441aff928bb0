//! Built-in word lists for the rule-based detector and query analysis.

/// Trailing tokens that mark a capitalized sequence as an organization name.
pub const ORG_SUFFIXES: &[&str] = &[
    "Inc.", "Inc", "Incorporated", "Corp.", "Corp", "Corporation", "LLC", "L.L.C.", "Ltd.", "Ltd", "Limited", "LLP", "L.P.",
    "LP", "PLC", "plc", "GmbH", "AG", "S.A.", "N.V.", "Co.", "Company", "Holdings", "Group", "Industries", "Partners",
    "Technologies", "Systems", "Laboratories", "Pharmaceuticals", "Bancorp", "Trust",
];

/// Honorifics that introduce a person name.
pub const HONORIFICS: &[&str] = &["Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "Mr", "Mrs", "Ms", "Dr"];

/// Place names matched case-sensitively by the rule detector.
pub const LOCATIONS: &[&str] = &[
    // regions
    "North America", "South America", "Latin America", "Europe", "European Union", "Asia", "Asia Pacific", "Africa",
    "Middle East", "Scandinavia",
    // countries
    "United States", "United States of America", "Canada", "Mexico", "Brazil", "Argentina", "United Kingdom", "England",
    "Scotland", "Ireland", "France", "Germany", "Spain", "Portugal", "Italy", "Netherlands", "Belgium", "Switzerland",
    "Austria", "Sweden", "Norway", "Denmark", "Finland", "Poland", "Israel", "India", "China", "Japan", "Korea",
    "Singapore", "Hong Kong", "Taiwan", "Australia", "New Zealand", "South Africa",
    // US states
    "Alabama", "Alaska", "Arizona", "Arkansas", "California", "Colorado", "Connecticut", "Delaware", "Florida", "Georgia",
    "Hawaii", "Idaho", "Illinois", "Indiana", "Iowa", "Kansas", "Kentucky", "Louisiana", "Maine", "Maryland",
    "Massachusetts", "Michigan", "Minnesota", "Mississippi", "Missouri", "Montana", "Nebraska", "Nevada", "New Hampshire",
    "New Jersey", "New Mexico", "New York", "North Carolina", "North Dakota", "Ohio", "Oklahoma", "Oregon",
    "Pennsylvania", "Rhode Island", "South Carolina", "South Dakota", "Tennessee", "Texas", "Utah", "Vermont",
    "Virginia", "Washington", "West Virginia", "Wisconsin", "Wyoming",
    // cities
    "New York City", "Los Angeles", "San Francisco", "San Diego", "San Jose", "Seattle", "Chicago", "Boston", "Houston",
    "Dallas", "Austin", "Denver", "Atlanta", "Miami", "Philadelphia", "Pittsburgh", "Minneapolis", "Detroit",
    "Toronto", "Vancouver", "Montreal", "London", "Paris", "Berlin", "Munich", "Frankfurt", "Madrid", "Barcelona",
    "Rome", "Milan", "Amsterdam", "Brussels", "Zurich", "Geneva", "Vienna", "Stockholm", "Oslo", "Copenhagen",
    "Dublin", "Edinburgh", "Tokyo", "Osaka", "Seoul", "Beijing", "Shanghai", "Shenzhen", "Mumbai", "Bangalore",
    "Delhi", "Sydney", "Melbourne", "Tel Aviv",
];

/// True if `name` is (case-insensitively) one of the built-in locations.
pub fn is_location(name: &str) -> bool {
    LOCATIONS.iter().any(|l| l.eq_ignore_ascii_case(name.trim()))
}
