//! Synthetic labeled corpora.
//!
//! Commands are drawn as `Verb-Az<Noun><Suffix>` and each command gets one
//! response tree. A field is sensitive when its name or its parent's name
//! contains a sensitive stem and its type is string-like. Trees are first
//! built without sensitive fields; then exactly enough leaves are rewritten
//! into sensitive strings to hit the requested positive rate.

use std::collections::{BTreeSet, HashSet};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::HarnessError;
use crate::schema::{flatten_response, FieldRecord, ResponseNode};
use crate::tokenizer::tokenize;

pub const DEFAULT_STEMS: [&str; 8] = [
    "password",
    "secret",
    "key",
    "certificate",
    "connection",
    "sas",
    "token",
    "credential",
];

/// Average number of records per command in the corpus being imitated.
const RECORDS_PER_COMMAND: usize = 44;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub record_count: usize,
    pub positive_rate: f64,
    pub sensitive_stems: Vec<String>,
    pub label_noise_rate: f64,
    /// Number of distinct commands; derived from `record_count` when absent.
    pub command_pool_size: Option<usize>,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            record_count: 5000,
            positive_rate: 0.035,
            sensitive_stems: DEFAULT_STEMS.iter().map(|s| s.to_string()).collect(),
            label_noise_rate: 0.02,
            command_pool_size: None,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn commands(&self) -> usize {
        self.command_pool_size
            .unwrap_or_else(|| (self.record_count as f64 / RECORDS_PER_COMMAND as f64).round() as usize)
            .max(3)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Spec(m));
        if !(0.0..=1.0).contains(&self.positive_rate) {
            return bad(format!("positive_rate {} is outside [0, 1]", self.positive_rate));
        }
        if !(0.0..=1.0).contains(&self.label_noise_rate) {
            return bad(format!("label_noise_rate {} is outside [0, 1]", self.label_noise_rate));
        }
        if self.sensitive_stems.is_empty() {
            return bad("at least one sensitive stem is required".into());
        }
        if let Some(s) = self
            .sensitive_stems
            .iter()
            .find(|s| s.is_empty() || !s.chars().all(|c| c.is_ascii_alphanumeric()))
        {
            return bad(format!("sensitive stem {s:?} must be non-empty ASCII alphanumeric"));
        }
        if self.positive_rate > 0.0 && self.label_noise_rate >= 1.0 {
            return bad("every positive would be flipped by label noise of 1".into());
        }
        if self.record_count < 2 * self.commands() {
            return bad(format!(
                "{} records cannot cover {} commands with at least two records each",
                self.record_count,
                self.commands()
            ));
        }
        Ok(())
    }

    /// Number of rule-positive records before label noise.
    fn clean_positive_target(&self) -> usize {
        if self.positive_rate == 0.0 {
            return 0;
        }
        (self.record_count as f64 * self.positive_rate / (1.0 - self.label_noise_rate)).round() as usize
    }
}

/// One command's response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedResponse {
    pub command: String,
    pub module: String,
    pub response: ResponseNode,
}

/// True when the name contains any stem, ignoring case.
pub fn name_is_sensitive(name: &str, stems: &[String]) -> bool {
    let lower = name.to_lowercase();
    stems.iter().any(|s| lower.contains(&s.to_lowercase()))
}

/// True when the type tokenizes to include the word `string`.
pub fn type_is_string_like(type_name: &str) -> bool {
    tokenize(type_name).iter().any(|t| t == "string")
}

/// The labeling rule: sensitive name or parent name, and a string-like type.
pub fn sensitive_rule(record: &FieldRecord, stems: &[String]) -> bool {
    (name_is_sensitive(&record.field_name, stems) || name_is_sensitive(&record.parent_name, stems))
        && type_is_string_like(&record.field_type)
}

const VERBS: &[&str] = &[
    "Get", "New", "Set", "Remove", "Update", "Add", "Start", "Stop", "Restart", "Test", "Invoke", "Enable", "Disable",
    "Export", "Import", "Move", "Reset", "Register", "Unregister", "Publish", "Grant", "Revoke", "Suspend", "Resume",
];

/// Noun and the module it belongs to.
const NOUNS: &[(&str, &str)] = &[
    ("VM", "Compute"),
    ("Disk", "Compute"),
    ("Snapshot", "Compute"),
    ("Image", "Compute"),
    ("AvailabilitySet", "Compute"),
    ("VmssVM", "Compute"),
    ("VirtualNetwork", "Network"),
    ("PublicIpAddress", "Network"),
    ("LoadBalancer", "Network"),
    ("NetworkSecurityGroup", "Network"),
    ("ApplicationGateway", "Network"),
    ("Firewall", "Network"),
    ("VirtualNetworkGatewayConnection", "Network"),
    ("StorageAccount", "Storage"),
    ("StorageAccountKey", "Storage"),
    ("StorageContainer", "Storage"),
    ("StorageBlob", "Storage"),
    ("StorageQueue", "Storage"),
    ("KeyVault", "KeyVault"),
    ("KeyVaultSecret", "KeyVault"),
    ("KeyVaultKey", "KeyVault"),
    ("KeyVaultCertificate", "KeyVault"),
    ("SqlServer", "Sql"),
    ("SqlDatabase", "Sql"),
    ("SqlElasticPool", "Sql"),
    ("WebApp", "Websites"),
    ("AppServicePlan", "Websites"),
    ("FunctionApp", "Functions"),
    ("CosmosDBAccount", "CosmosDB"),
    ("RedisCache", "RedisCache"),
    ("EventHub", "EventHub"),
    ("EventHubNamespace", "EventHub"),
    ("ServiceBusQueue", "ServiceBus"),
    ("ServiceBusNamespace", "ServiceBus"),
    ("AksCluster", "Aks"),
    ("ContainerRegistry", "ContainerRegistry"),
    ("ResourceGroup", "Resources"),
    ("Location", "Resources"),
    ("RoleAssignment", "Resources"),
    ("PolicyDefinition", "Resources"),
    ("Subscription", "Accounts"),
    ("Context", "Accounts"),
    ("OperationalInsightsWorkspace", "OperationalInsights"),
    ("MetricAlertRule", "Monitor"),
    ("DataFactory", "DataFactory"),
    ("BatchAccount", "Batch"),
    ("AutomationAccount", "Automation"),
    ("ApiManagement", "ApiManagement"),
    ("SignalR", "SignalR"),
    ("IotHub", "IotHub"),
    ("StorageAccountSasToken", "Storage"),
    ("RedisCacheKey", "RedisCache"),
    ("CosmosDBAccountKey", "CosmosDB"),
    ("BatchAccountKey", "Batch"),
    ("ContainerRegistryCredential", "ContainerRegistry"),
    ("AccessToken", "Accounts"),
    ("ServiceBusKey", "ServiceBus"),
    ("EventHubKey", "EventHub"),
    ("AutomationCredential", "Automation"),
    ("WebAppCertificate", "Websites"),
    ("ApiManagementCertificate", "ApiManagement"),
    ("SqlServerConnectionPolicy", "Sql"),
];

const SUFFIXES: &[&str] = &[
    "", "", "", "", "Config", "Extension", "Policy", "Rule", "Setting", "Profile", "Assignment", "Definition", "Endpoint",
    "Pool", "Group", "Operation", "Diagnostic", "Backup", "Replica",
];

const LIST_TYPE: &str = "System.Collections.Generic.List<string>";
const DICT_TYPE: &str = "System.Collections.Generic.Dictionary<string,string>";
const NON_STRING_TYPES: &[&str] = &["int", "bool", "long", "System.DateTime", "System.Nullable<int>", "System.Guid"];

/// Neutral leaf names with the type they usually carry.
const NEUTRAL_FIELDS: &[(&str, &str)] = &[
    ("Name", "string"),
    ("Id", "string"),
    ("Location", "string"),
    ("ResourceGroupName", "string"),
    ("Type", "string"),
    ("Tags", DICT_TYPE),
    ("ProvisioningState", "string"),
    ("Status", "string"),
    ("DisplayName", "string"),
    ("Description", "System.String"),
    ("CreatedTime", "System.DateTime"),
    ("LastModifiedTime", "System.Nullable<System.DateTime>"),
    ("SkuName", "string"),
    ("Tier", "string"),
    ("Capacity", "int"),
    ("Version", "string"),
    ("Enabled", "bool"),
    ("Kind", "string"),
    ("Etag", "string"),
    ("Zones", LIST_TYPE),
    ("VmSize", "string"),
    ("OsType", "string"),
    ("DiskSizeGB", "System.Nullable<int>"),
    ("Port", "int"),
    ("IpAddress", "string"),
    ("Fqdn", "string"),
    ("Uri", "System.Uri"),
    ("HostName", "string"),
    ("SubscriptionId", "System.Guid"),
    ("TenantId", "System.Guid"),
    ("ObjectId", "string"),
    ("ApplicationId", "System.Guid"),
    ("PrincipalId", "string"),
    ("State", "string"),
    ("Count", "int"),
    ("Priority", "int"),
    ("Protocol", "string"),
    ("RetentionDays", "int"),
    ("Timeout", "System.TimeSpan"),
    ("MaxSizeBytes", "long"),
    ("Url", "string"),
    ("Path", "string"),
    ("Category", "string"),
    ("Mode", "string"),
    ("Scope", "string"),
    ("RoleDefinitionName", "string"),
    ("AddressPrefixes", LIST_TYPE),
    ("DnsServers", LIST_TYPE),
    ("Owner", "string"),
    ("Region", "string"),
    ("IsDefault", "bool"),
    ("Replicas", "int"),
    ("EndpointUri", "string"),
    ("ServerVersion", "string"),
    ("Collation", "string"),
    ("MinimumTlsVersion", "string"),
    ("NodeCount", "int"),
    ("KubernetesVersion", "string"),
    ("ExpiresOn", "System.Nullable<System.DateTime>"),
    ("Thumbprint", "string"),
    ("Value", "string"),
    ("Data", "System.String"),
    ("Content", "string"),
];

/// Qualifiers used for neutral and sensitive names alike, so that only the
/// stem tells them apart.
const NAME_PREFIXES: &[&str] = &[
    "Primary", "Secondary", "Default", "Admin", "Client", "Access", "Shared", "Public", "Private", "Source", "Target",
];
/// Probability that a neutral name gets a qualifier.
const PREFIX_RATE: f64 = 0.25;

const NEUTRAL_OBJECTS: &[&str] = &[
    "Properties",
    "Sku",
    "NetworkProfile",
    "OsProfile",
    "StorageProfile",
    "Identity",
    "Settings",
    "Configuration",
    "Encryption",
    "Endpoints",
    "DiagnosticsProfile",
    "HardwareProfile",
    "IpConfiguration",
    "BackupPolicy",
    "NetworkRuleSet",
    "Plan",
];

const SENSITIVE_PREFIXES: &[&str] = &["", "", "", "", "Primary", "Secondary", "Admin", "Client", "Access", "Shared"];
const SENSITIVE_SUFFIXES: &[&str] = &["", "", "", "Value", "String", "Data"];
const HARD_NEGATIVE_SUFFIXES: &[&str] = &[
    "Size", "Count", "Expiry", "Enabled", "Version", "Lifetime", "Length", "Created", "Rotation",
];
const SENSITIVE_OBJECT_SUFFIXES: &[&str] = &["Properties", "Policy", "Settings", "Attributes", "Info"];
/// Sensitive field names that recur across many services, most common first.
const COMMON_SENSITIVE_NAMES: &[&str] = &[
    "Password",
    "ConnectionString",
    "PrimaryKey",
    "SecondaryKey",
    "AdminPassword",
    "Secret",
    "ClientSecret",
    "AccessToken",
    "SasToken",
    "PrimaryConnectionString",
    "SecondaryConnectionString",
    "Certificate",
    "AccessKey",
    "StorageAccountKey",
    "Token",
    "Key",
    "Credential",
    "SharedAccessKey",
    "CertificatePassword",
    "KeyValue",
    "SecretValue",
    "RefreshToken",
    "CertificateData",
    "SasUri",
];
/// Share of directly sensitive fields drawn from the common names.
const COMMON_NAME_RATE: f64 = 0.7;
const SENSITIVE_CHILD_NAMES: &[&str] = &["Value", "Data", "Content", "Raw", "Text"];
const SENSITIVE_STRING_TYPES: &[(&str, f64)] = &[
    ("string", 0.6),
    ("System.String", 0.15),
    ("SecureString", 0.15),
    (LIST_TYPE, 0.1),
];

/// Probability that a top-level slot becomes a nested object.
const OBJECT_RATE: f64 = 0.15;
/// Probability that a nested object is named after a stem.
const SENSITIVE_OBJECT_RATE: f64 = 0.06;

struct Command {
    name: String,
    module: String,
    root_type: String,
}

struct Generator<'a> {
    spec: &'a CorpusSpec,
    rng: ChaCha8Rng,
    neutral_fields: Vec<(String, &'static str)>,
    neutral_objects: Vec<&'static str>,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl<'a> Generator<'a> {
    fn new(spec: &'a CorpusSpec) -> Self {
        let stems = &spec.sensitive_stems;
        let neutral_fields = NEUTRAL_FIELDS
            .iter()
            .filter(|(n, _)| !name_is_sensitive(n, stems))
            .map(|&(n, ty)| (n.to_string(), ty))
            .collect();
        let neutral_objects = NEUTRAL_OBJECTS
            .iter()
            .copied()
            .filter(|n| !name_is_sensitive(n, stems))
            .collect();
        Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            neutral_fields,
            neutral_objects,
        }
    }

    fn commands(&mut self) -> Result<Vec<Command>, HarnessError> {
        let wanted = self.spec.commands();
        let capacity = VERBS.len() * NOUNS.len() * (SUFFIXES.len() - 3);
        if wanted > capacity {
            return Err(HarnessError::Spec(format!(
                "{wanted} commands requested but only {capacity} distinct names can be generated"
            )));
        }
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(wanted);
        while out.len() < wanted {
            let verb = VERBS.choose(&mut self.rng).unwrap();
            let &(noun, module) = NOUNS.choose(&mut self.rng).unwrap();
            let suffix = SUFFIXES.choose(&mut self.rng).unwrap();
            let name = format!("{verb}-Az{noun}{suffix}");
            if seen.insert(name.clone()) {
                out.push(Command {
                    name,
                    module: module.to_string(),
                    root_type: format!("PS{noun}{suffix}"),
                });
            }
        }
        Ok(out)
    }

    /// Splits the record budget over commands, at least two records each.
    fn tree_sizes(&mut self, commands: usize) -> Vec<usize> {
        let spare = self.spec.record_count - 2 * commands;
        let weights: Vec<f64> = (0..commands).map(|_| self.rng.gen_range(0.4..1.6)).collect();
        let total: f64 = weights.iter().sum();
        let ideal: Vec<f64> = weights.iter().map(|w| spare as f64 * w / total).collect();
        let mut sizes: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
        let mut left = spare - sizes.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..commands).collect();
        order.sort_by(|&a, &b| (ideal[b] - ideal[b].floor()).total_cmp(&(ideal[a] - ideal[a].floor())).then(a.cmp(&b)));
        for &i in &order {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        sizes.iter().map(|s| s + 2).collect()
    }

    fn stem(&mut self) -> String {
        capitalize(self.spec.sensitive_stems.choose(&mut self.rng).unwrap())
    }

    fn neutral_leaf(&mut self, string_allowed: bool, taken: &mut BTreeSet<String>) -> ResponseNode {
        for attempt in 0.. {
            let (mut name, ty) = self.neutral_fields.choose(&mut self.rng).unwrap().clone();
            if !string_allowed && type_is_string_like(ty) {
                continue;
            }
            if self.rng.gen_bool(PREFIX_RATE) {
                let qualified = format!("{}{name}", NAME_PREFIXES.choose(&mut self.rng).unwrap());
                if !name_is_sensitive(&qualified, &self.spec.sensitive_stems) {
                    name = qualified;
                }
            }
            if taken.insert(name.clone()) || attempt > 16 {
                let value = self.value_for(ty, false);
                return ResponseNode::leaf(&name, ty, Some(value));
            }
        }
        unreachable!()
    }

    /// A stem-named field whose type is not string-like.
    fn hard_negative_leaf(&mut self) -> ResponseNode {
        let prefix = SENSITIVE_PREFIXES.choose(&mut self.rng).unwrap();
        let stem = self.stem();
        let suffix = HARD_NEGATIVE_SUFFIXES.choose(&mut self.rng).unwrap();
        let ty = *NON_STRING_TYPES.choose(&mut self.rng).unwrap();
        let value = self.value_for(ty, false);
        ResponseNode::leaf(&format!("{prefix}{stem}{suffix}"), ty, Some(value))
    }

    fn object(&mut self, children: usize, root_module: &str) -> ResponseNode {
        let sensitive = self.rng.gen_bool(SENSITIVE_OBJECT_RATE);
        let name = if sensitive {
            format!("{}{}", self.stem(), SENSITIVE_OBJECT_SUFFIXES.choose(&mut self.rng).unwrap())
        } else {
            self.neutral_objects.choose(&mut self.rng).unwrap().to_string()
        };
        let ty = if self.rng.gen_bool(0.5) {
            format!("PS{name}")
        } else {
            format!("Microsoft.Azure.Management.{root_module}.Models.{name}")
        };
        let mut taken = BTreeSet::new();
        let kids = (0..children)
            .map(|_| {
                if sensitive && self.rng.gen_bool(0.3) {
                    self.hard_negative_leaf()
                } else {
                    self.neutral_leaf(!sensitive, &mut taken)
                }
            })
            .collect();
        ResponseNode::object(&name, &ty, kids)
    }

    fn tree(&mut self, command: &Command, size: usize) -> ResponseNode {
        let hard_negative_rate = (self.spec.positive_rate * 0.2).min(0.2);
        let mut remaining = size - 1;
        let mut children = Vec::new();
        let mut taken = BTreeSet::new();
        while remaining > 0 {
            if remaining >= 3 && self.rng.gen_bool(OBJECT_RATE) {
                let n = self.rng.gen_range(2..=5).min(remaining - 1);
                children.push(self.object(n, &command.module));
                remaining -= n + 1;
            } else {
                let leaf = if self.rng.gen_bool(hard_negative_rate) {
                    self.hard_negative_leaf()
                } else {
                    self.neutral_leaf(true, &mut taken)
                };
                children.push(leaf);
                remaining -= 1;
            }
        }
        ResponseNode::object("", &command.root_type, children)
    }

    fn value_for(&mut self, ty: &str, secret: bool) -> Value {
        const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
        let word = |n: usize, rng: &mut ChaCha8Rng| -> String {
            (0..n).map(|_| *ALPHABET[..62].choose(rng).unwrap() as char).collect()
        };
        if secret {
            let s: String = (0..32).map(|_| *ALPHABET.choose(&mut self.rng).unwrap() as char).collect();
            return if ty == LIST_TYPE { json!([s]) } else { json!(s) };
        }
        match ty {
            "int" | "long" | "System.Nullable<int>" => json!(self.rng.gen_range(0..4096)),
            "bool" => json!(self.rng.gen_bool(0.5)),
            t if t.contains("DateTime") => json!(format!(
                "2023-{:02}-{:02}T{:02}:00:00Z",
                self.rng.gen_range(1..=12),
                self.rng.gen_range(1..=28),
                self.rng.gen_range(0..24)
            )),
            t if t == LIST_TYPE => json!([word(6, &mut self.rng), word(6, &mut self.rng)]),
            t if t == DICT_TYPE => json!({ "env": word(4, &mut self.rng) }),
            _ => json!(word(10, &mut self.rng)),
        }
    }

    fn sensitive_string_type(&mut self) -> &'static str {
        SENSITIVE_STRING_TYPES
            .choose_weighted(&mut self.rng, |t| t.1)
            .map(|t| t.0)
            .unwrap_or("string")
    }

    /// Rewrites one leaf into a field the rule labels sensitive.
    fn make_sensitive(&mut self, leaf: &mut ResponseNode, parent_sensitive: bool) {
        let ty = self.sensitive_string_type();
        let name = if parent_sensitive {
            SENSITIVE_CHILD_NAMES.choose(&mut self.rng).unwrap().to_string()
        } else {
            let common: Vec<(usize, &str)> = COMMON_SENSITIVE_NAMES
                .iter()
                .copied()
                .filter(|n| name_is_sensitive(n, &self.spec.sensitive_stems))
                .enumerate()
                .collect();
            if !common.is_empty() && self.rng.gen_bool(COMMON_NAME_RATE) {
                let (_, name) = *common.choose_weighted(&mut self.rng, |(rank, _)| 1.0 / (rank + 1) as f64).unwrap();
                name.to_string()
            } else {
                let prefix = SENSITIVE_PREFIXES.choose(&mut self.rng).unwrap();
                let stem = self.stem();
                let suffix = SENSITIVE_SUFFIXES.choose(&mut self.rng).unwrap();
                format!("{prefix}{stem}{suffix}")
            }
        };
        let value = self.value_for(ty, true);
        *leaf = ResponseNode::leaf(&name, ty, Some(value));
    }
}

fn node_at<'t>(root: &'t mut ResponseNode, path: &[usize]) -> &'t mut ResponseNode {
    path.iter().fold(root, |node, &i| &mut node.children[i])
}

/// Builds one response per command, with exactly `record_count` fields in
/// total and enough sensitive leaves for the requested positive rate.
pub fn generate_responses(spec: &CorpusSpec) -> Result<Vec<GeneratedResponse>, HarnessError> {
    spec.validate()?;
    let mut g = Generator::new(spec);
    let commands = g.commands()?;
    let sizes = g.tree_sizes(commands.len());
    let mut trees: Vec<ResponseNode> = commands.iter().zip(&sizes).map(|(c, &s)| g.tree(c, s)).collect();

    let stems = &spec.sensitive_stems;
    let mut already = 0;
    // (tree, path to leaf, parent name is sensitive)
    let mut slots: Vec<(usize, Vec<usize>, bool)> = Vec::new();
    for (t, tree) in trees.iter().enumerate() {
        for (i, child) in tree.children.iter().enumerate() {
            let leaves: Vec<(Vec<usize>, &ResponseNode, &ResponseNode)> = if child.children.is_empty() {
                vec![(vec![i], child, tree)]
            } else {
                child.children.iter().enumerate().map(|(j, c)| (vec![i, j], c, child)).collect()
            };
            for (path, leaf, parent) in leaves {
                let parent_sensitive = name_is_sensitive(&parent.name, stems);
                let leaf_sensitive = name_is_sensitive(&leaf.name, stems);
                if (leaf_sensitive || parent_sensitive) && type_is_string_like(&leaf.type_name) {
                    already += 1;
                } else if !leaf_sensitive {
                    slots.push((t, path, parent_sensitive));
                }
            }
        }
    }

    let target = spec.clean_positive_target();
    if target < already || target - already > slots.len() {
        return Err(HarnessError::Spec(format!(
            "cannot place {target} sensitive fields among {} records",
            spec.record_count
        )));
    }
    let mut chosen = index::sample(&mut g.rng, slots.len(), target - already).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let (t, path, parent_sensitive) = &slots[i];
        let leaf = node_at(&mut trees[*t], path);
        g.make_sensitive(leaf, *parent_sensitive);
    }

    Ok(commands
        .into_iter()
        .zip(trees)
        .map(|(c, response)| GeneratedResponse {
            command: c.name,
            module: c.module,
            response,
        })
        .collect())
}

/// Flattens the generated responses and labels every record with the rule,
/// then flips positives to negatives with probability `label_noise_rate`.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<FieldRecord>, HarnessError> {
    let responses = generate_responses(spec)?;
    let mut records = Vec::with_capacity(spec.record_count);
    for r in &responses {
        for mut record in flatten_response(&r.command, &r.module, &r.response)? {
            record.label = sensitive_rule(&record, &spec.sensitive_stems);
            records.push(record);
        }
    }
    let mut noise = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6e6f_6973_6500_0000);
    if spec.label_noise_rate > 0.0 {
        for record in records.iter_mut().filter(|r| r.label) {
            if noise.gen_bool(spec.label_noise_rate) {
                record.label = false;
            }
        }
    }
    Ok(records)
}
