#pragma once

#include <string>
#include <vector>

#include "translayer/cell1d.hpp"
#include "translayer/cellnd.hpp"
#include "translayer/config.hpp"
#include "translayer/fields.hpp"
#include "translayer/kernel.hpp"
#include "translayer/oracles.hpp"
#include "translayer/recovery.hpp"
#include "translayer/surface.hpp"

namespace translayer {

// %.17g with a guaranteed '.', exponent, or non-finite marker, so the text
// form reads back as a float and round-trips to the same bits.
std::string format_double(double x);

// Result documents: "schema" version first, then "generated_at" (the only
// non-reproducible entry), then the payload entries in tree order.
ConfigTree json_document(const ConfigTree& body);
std::string write_json(const ConfigTree& doc);
// Removes the generated_at line so documents from different runs can be
// compared byte for byte.
std::string strip_timestamp(const std::string& json_text);

ConfigTree to_tree(const LScanEntry& e);
ConfigTree to_tree(const Profile1D& p);
ConfigTree to_tree(const E1Result& r);
ConfigTree to_tree(const LatticeBasis& b);
ConfigTree to_tree(const CellProfile& p);
ConfigTree to_tree(const EPerResult& r);
ConfigTree to_tree(const EnergyTrace& t);
ConfigTree to_tree(const KFunctionalResult& r);
ConfigTree to_tree(const ValidationReport& r);
ConfigTree to_tree(const OracleReport& r);
ConfigTree to_tree(const BasisInvarianceReport& r);
ConfigTree to_tree(const RlEquivalenceReport& r);
ConfigTree to_tree(const GapSearchReport& r);

// CSV tables: '.' decimal point, ',' separator, first row is the header.
std::string profile_csv(const KernelProfile& profile);         // t,p,P
std::string trace_csv(const EnergyTrace& trace);
std::string nodes_csv(const Profile1D& profile);               // s,state_*
std::string scan_csv(const std::vector<LScanEntry>& entries);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace translayer
