#pragma once

#include <memory>
#include <string>

#include "maadvisor/io.hpp"
#include "maadvisor/oracle.hpp"

namespace maadvisor::testing {

inline std::string fixture_path(const std::string& name) {
  return std::string(MAADVISOR_FIXTURE_DIR) + "/" + name;
}

/// The S1 scenario: one `orders` table, q1 (base 100) and q2 (base 200).
struct S1 {
  std::shared_ptr<const DatabaseSchema> schema;
  Workload workload;
  SyntheticOracle oracle;

  S1()
      : schema(std::make_shared<const DatabaseSchema>(
            load_schema(read_text_file(fixture_path("s1_schema.json"))))),
        workload(load_workload(parse_workload_document(
                                   read_text_file(fixture_path("s1_workload.json"))),
                               *schema)),
        oracle(schema) {}
};

}  // namespace maadvisor::testing
