#pragma once

// Bundled copy of assets/cage2_default.json (the CAGE-2 infrastructure).

#include "cage2/scenario.hpp"

namespace cage2 {

inline constexpr std::string_view kDefaultScenarioJson = R"json(
{
  "subnets": [1, 2, 3],
  "services": ["SSH", "FTP", "SMB", "RDS", "MYSQL", "APACHE2", "SMTP", "SSHD", "TOMCAT8"],
  "target_host": "OP-SERVER",
  "entry_subnet": 1,
  "hosts": [
    {"name": "CLIENT-1", "subnet": 1, "services": {"SSH": "S", "FTP": "U"}, "connectivity": "ENT-1"},
    {"name": "CLIENT-2", "subnet": 1, "services": {"SMB": "N", "RDS": "S"}, "connectivity": "ENT-1"},
    {"name": "CLIENT-3", "subnet": 1, "services": {"MYSQL": "S", "APACHE2": "U", "SMTP": "S"}, "connectivity": "ENT-0"},
    {"name": "CLIENT-4", "subnet": 1, "services": {"SSHD": "S", "MYSQL": "S", "APACHE2": "U", "SMTP": "S"}, "connectivity": "ENT-0"},
    {"name": "ENT-0", "subnet": 2, "services": {"SSHD": "S"}},
    {"name": "ENT-1", "subnet": 2, "services": {"SSHD": "S", "RDS": "N", "SMB": "S", "TOMCAT8": "U"}},
    {"name": "ENT-2", "subnet": 2, "services": {"SSHD": "S", "RDS": "N", "SMB": "S", "TOMCAT8": "U"}, "connectivity": "OP-SERVER"},
    {"name": "OP-SERVER", "subnet": 3, "services": {"SSHD": "S"}},
    {"name": "OP-HOST-0", "subnet": 3, "services": {"SSHD": "S"}},
    {"name": "OP-HOST-1", "subnet": 3, "services": {"SSHD": "S"}},
    {"name": "OP-HOST-2", "subnet": 3, "services": {"SSHD": "S"}}
  ]
}
)json";

inline const Scenario& default_scenario() {
  static const Scenario scenario = load_scenario(kDefaultScenarioJson);
  return scenario;
}

}  // namespace cage2
