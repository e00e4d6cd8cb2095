#pragma once

// Static network infrastructure: hosts, subnets, services, the access map
// t(h,e) and the root-access connectivity map g_M.

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cage2 {

inline constexpr std::size_t kMaxServices = 32;

using HostIndex = std::size_t;
using ServiceIndex = std::size_t;
using SubnetId = int;

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Access granted by exploiting a service. kNotAService marks a service that
// does not really run on the host (a decoy, or simply absent).
enum class ServiceAccess : std::uint8_t { kNone, kUser, kSuperuser, kNotAService };

inline char access_code(ServiceAccess a) {
  switch (a) {
    case ServiceAccess::kNone: return 'N';
    case ServiceAccess::kUser: return 'U';
    case ServiceAccess::kSuperuser: return 'S';
    case ServiceAccess::kNotAService: return '-';
  }
  return '?';
}

inline int access_rank(ServiceAccess a) {
  switch (a) {
    case ServiceAccess::kSuperuser: return 2;
    case ServiceAccess::kUser: return 1;
    default: return 0;
  }
}

// Bitmask over scenario service indices.
class ServiceSet {
 public:
  constexpr ServiceSet() = default;
  constexpr explicit ServiceSet(std::uint32_t bits) : bits_(bits) {}

  constexpr bool contains(ServiceIndex e) const { return (bits_ >> e) & 1u; }
  constexpr void insert(ServiceIndex e) { bits_ |= (1u << e); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  constexpr std::uint32_t bits() const { return bits_; }
  constexpr bool is_subset_of(ServiceSet other) const { return (bits_ & ~other.bits_) == 0; }

  friend constexpr bool operator==(ServiceSet, ServiceSet) = default;

 private:
  std::uint32_t bits_ = 0;
};

struct ServiceGrant {
  std::string service;
  ServiceAccess access = ServiceAccess::kNone;
  friend bool operator==(const ServiceGrant&, const ServiceGrant&) = default;
};

struct HostSpec {
  std::string name;
  SubnetId subnet = 0;
  std::vector<ServiceGrant> services;
  std::optional<std::string> connectivity;
  friend bool operator==(const HostSpec&, const HostSpec&) = default;
};

class Scenario {
 public:
  Scenario(std::vector<SubnetId> subnets, std::vector<std::string> services,
           std::vector<HostSpec> hosts, std::string target_host,
           std::optional<SubnetId> entry_subnet = std::nullopt)
      : subnets_(std::move(subnets)),
        services_(std::move(services)),
        hosts_(std::move(hosts)),
        target_host_name_(std::move(target_host)) {
    entry_subnet_ = entry_subnet.value_or(subnets_.empty() ? 0 : subnets_.front());
    build_index();
  }

  std::size_t host_count() const { return hosts_.size(); }
  std::size_t service_count() const { return services_.size(); }
  std::size_t subnet_count() const { return subnets_.size(); }

  const std::vector<HostSpec>& hosts() const { return hosts_; }
  const std::vector<std::string>& services() const { return services_; }
  const std::vector<SubnetId>& subnets() const { return subnets_; }
  const HostSpec& host(HostIndex h) const { return hosts_.at(h); }
  const std::string& service_name(ServiceIndex e) const { return services_.at(e); }

  HostIndex target_host() const { return target_; }
  const std::string& target_host_name() const { return target_host_name_; }
  SubnetId entry_subnet() const { return entry_subnet_; }

  HostIndex host_index(std::string_view name) const {
    auto it = host_lookup_.find(std::string(name));
    if (it == host_lookup_.end()) throw ScenarioError("unknown host '" + std::string(name) + "'");
    return it->second;
  }
  std::optional<HostIndex> find_host(std::string_view name) const {
    auto it = host_lookup_.find(std::string(name));
    if (it == host_lookup_.end()) return std::nullopt;
    return it->second;
  }
  ServiceIndex service_index(std::string_view name) const {
    auto it = service_lookup_.find(std::string(name));
    if (it == service_lookup_.end()) throw ScenarioError("unknown service '" + std::string(name) + "'");
    return it->second;
  }
  std::size_t subnet_position(SubnetId z) const {
    for (std::size_t i = 0; i < subnets_.size(); ++i)
      if (subnets_[i] == z) return i;
    throw ScenarioError("unknown subnet " + std::to_string(z));
  }

  SubnetId subnet_of(HostIndex h) const { return hosts_.at(h).subnet; }
  // E_h, the services really provided by host h.
  ServiceSet provided(HostIndex h) const { return provided_.at(h); }

  // t(h,e) by index, kNotAService when e is not in E_h.
  ServiceAccess access(HostIndex h, ServiceIndex e) const {
    return access_.at(h * services_.size() + e);
  }
  std::optional<HostIndex> connectivity_of(HostIndex h) const { return connectivity_.at(h); }

  friend bool operator==(const Scenario& a, const Scenario& b) {
    return a.subnets_ == b.subnets_ && a.services_ == b.services_ && a.hosts_ == b.hosts_ &&
           a.target_host_name_ == b.target_host_name_ && a.entry_subnet_ == b.entry_subnet_;
  }

 private:
  void build_index() {
    if (services_.size() > kMaxServices)
      throw ScenarioError("at most " + std::to_string(kMaxServices) + " services are supported");
    if (subnets_.empty()) throw ScenarioError("subnets: at least one subnet is required");
    if (hosts_.empty()) throw ScenarioError("hosts: at least one host is required");
    for (std::size_t i = 0; i < subnets_.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (subnets_[i] == subnets_[j])
          throw ScenarioError("subnets[" + std::to_string(i) + "]: duplicate subnet " +
                              std::to_string(subnets_[i]));
    for (std::size_t e = 0; e < services_.size(); ++e) {
      if (!service_lookup_.emplace(services_[e], e).second)
        throw ScenarioError("services[" + std::to_string(e) + "]: duplicate service '" +
                            services_[e] + "'");
    }
    for (std::size_t h = 0; h < hosts_.size(); ++h) {
      if (!host_lookup_.emplace(hosts_[h].name, h).second)
        throw ScenarioError(location(h) + ": duplicate host name '" + hosts_[h].name + "'");
    }
    auto known_subnet = [&](SubnetId z) {
      for (SubnetId s : subnets_)
        if (s == z) return true;
      return false;
    };
    if (!known_subnet(entry_subnet_))
      throw ScenarioError("entry_subnet: unknown subnet " + std::to_string(entry_subnet_));

    const std::size_t m = services_.size();
    access_.assign(hosts_.size() * m, ServiceAccess::kNotAService);
    provided_.assign(hosts_.size(), ServiceSet{});
    connectivity_.assign(hosts_.size(), std::nullopt);
    for (std::size_t h = 0; h < hosts_.size(); ++h) {
      const HostSpec& spec = hosts_[h];
      if (!known_subnet(spec.subnet))
        throw ScenarioError(location(h) + ": unknown subnet " + std::to_string(spec.subnet));
      for (const ServiceGrant& g : spec.services) {
        auto it = service_lookup_.find(g.service);
        if (it == service_lookup_.end())
          throw ScenarioError(location(h) + ": unknown service '" + g.service + "'");
        if (g.access == ServiceAccess::kNotAService)
          throw ScenarioError(location(h) + ": access level for '" + g.service +
                              "' must be one of N, U, S");
        if (provided_[h].contains(it->second))
          throw ScenarioError(location(h) + ": service '" + g.service + "' listed twice");
        provided_[h].insert(it->second);
        access_[h * m + it->second] = g.access;
      }
      if (spec.connectivity) {
        auto it = host_lookup_.find(*spec.connectivity);
        if (it == host_lookup_.end())
          throw ScenarioError(location(h) + ": connectivity names unknown host '" +
                              *spec.connectivity + "'");
        connectivity_[h] = it->second;
      }
    }
    auto it = host_lookup_.find(target_host_name_);
    if (it == host_lookup_.end())
      throw ScenarioError("target_host: unknown host '" + target_host_name_ + "'");
    target_ = it->second;
  }

  std::string location(std::size_t h) const {
    return "hosts[" + std::to_string(h) + "] (" + hosts_[h].name + ")";
  }

  std::vector<SubnetId> subnets_;
  std::vector<std::string> services_;
  std::vector<HostSpec> hosts_;
  std::string target_host_name_;
  SubnetId entry_subnet_ = 0;

  HostIndex target_ = 0;
  std::map<std::string, HostIndex> host_lookup_;
  std::map<std::string, ServiceIndex> service_lookup_;
  std::vector<ServiceAccess> access_;
  std::vector<ServiceSet> provided_;
  std::vector<std::optional<HostIndex>> connectivity_;
};

// t(h,e) by name.
inline ServiceAccess service_access(const Scenario& s, std::string_view host, std::string_view service) {
  HostIndex h = s.host_index(host);
  auto e = s.services();
  for (std::size_t i = 0; i < e.size(); ++i)
    if (e[i] == service) return s.access(h, i);
  return ServiceAccess::kNotAService;
}

// g_M(h) by name.
inline std::optional<std::string> connectivity(const Scenario& s, std::string_view host) {
  auto c = s.connectivity_of(s.host_index(host));
  if (!c) return std::nullopt;
  return s.host(*c).name;
}

namespace detail {

inline ServiceAccess parse_access_code(const std::string& code, const std::string& where) {
  if (code == "N") return ServiceAccess::kNone;
  if (code == "U") return ServiceAccess::kUser;
  if (code == "S") return ServiceAccess::kSuperuser;
  throw ScenarioError(where + ": access level must be one of N, U, S (got '" + code + "')");
}

}  // namespace detail

// Parses the JSON scenario schema:
//   { "subnets": [1,2,3], "services": ["SSH", ...], "target_host": "OP-SERVER",
//     "entry_subnet": 1,                                   (optional)
//     "hosts": [ { "name": "CLIENT-1", "subnet": 1,
//                  "services": { "SSH": "S", "FTP": "U" },
//                  "connectivity": "ENT-1" }, ... ] }
inline Scenario load_scenario(std::string_view config_text) {
  using nlohmann::ordered_json;
  ordered_json doc;
  try {
    doc = ordered_json::parse(config_text);
  } catch (const ordered_json::parse_error& e) {
    throw ScenarioError(std::string("scenario parse error: ") + e.what());
  }
  auto require = [](const ordered_json& obj, const char* key, const std::string& where) -> const ordered_json& {
    if (!obj.is_object() || !obj.contains(key))
      throw ScenarioError(where + ": missing key '" + key + "'");
    return obj.at(key);
  };
  try {
    std::vector<SubnetId> subnets = require(doc, "subnets", "scenario").get<std::vector<SubnetId>>();
    std::vector<std::string> services = require(doc, "services", "scenario").get<std::vector<std::string>>();
    std::string target = require(doc, "target_host", "scenario").get<std::string>();
    std::optional<SubnetId> entry;
    if (doc.contains("entry_subnet")) entry = doc.at("entry_subnet").get<SubnetId>();

    const ordered_json& host_list = require(doc, "hosts", "scenario");
    if (!host_list.is_array()) throw ScenarioError("hosts: expected an array");
    std::vector<HostSpec> hosts;
    for (std::size_t i = 0; i < host_list.size(); ++i) {
      const ordered_json& item = host_list[i];
      std::string where = "hosts[" + std::to_string(i) + "]";
      HostSpec spec;
      spec.name = require(item, "name", where).get<std::string>();
      where += " (" + spec.name + ")";
      spec.subnet = require(item, "subnet", where).get<SubnetId>();
      const ordered_json& svc = require(item, "services", where);
      if (!svc.is_object()) throw ScenarioError(where + ": services must be an object of service -> access");
      for (auto it = svc.begin(); it != svc.end(); ++it)
        spec.services.push_back({it.key(), detail::parse_access_code(it.value().get<std::string>(), where)});
      if (item.contains("connectivity") && !item.at("connectivity").is_null())
        spec.connectivity = item.at("connectivity").get<std::string>();
      hosts.push_back(std::move(spec));
    }
    return Scenario(std::move(subnets), std::move(services), std::move(hosts), std::move(target), entry);
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("scenario schema error: ") + e.what());
  }
}

inline std::string serialize_scenario(const Scenario& s) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["subnets"] = s.subnets();
  doc["services"] = s.services();
  doc["target_host"] = s.target_host_name();
  doc["entry_subnet"] = s.entry_subnet();
  ordered_json hosts = ordered_json::array();
  for (const HostSpec& h : s.hosts()) {
    ordered_json item;
    item["name"] = h.name;
    item["subnet"] = h.subnet;
    ordered_json svc = ordered_json::object();
    for (const ServiceGrant& g : h.services) svc[g.service] = std::string(1, access_code(g.access));
    item["services"] = svc;
    if (h.connectivity) item["connectivity"] = *h.connectivity;
    hosts.push_back(std::move(item));
  }
  doc["hosts"] = std::move(hosts);
  return doc.dump(2) + "\n";
}

// FNV-1a over the canonical serialization; stored in checkpoints.
inline std::uint64_t scenario_fingerprint(const Scenario& s) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : serialize_scenario(s)) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

}  // namespace cage2
