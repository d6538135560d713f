#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "treecaps/ast.hpp"

namespace treecaps {

// Canonical template order; labels are indices into this list.
inline constexpr std::array<const char*, 10> kTemplateNames = {
    "bubble_sort", "insertion_sort", "selection_sort", "linear_search", "binary_search",
    "array_sum",   "array_max",      "reverse_array",  "fibonacci",     "gcd"};

struct DatasetManifest {
  std::vector<ProgramRecord> records;
  std::uint64_t seed = 0;
  std::string template_inventory_hash;
};

// Deterministic synthetic corpus: per_class instantiations per template,
// each with randomized identifiers, constants and bounds, 3 stored test
// inputs and the gold interpreter trace (self-checked at generation).
DatasetManifest generate(int num_classes, int per_class, std::uint64_t seed);

// Stratified 70/20/10 split (configurable), deterministic given seed.
void split(DatasetManifest& manifest, std::array<double, 3> ratios, std::uint64_t seed);

// Function-name-prediction variant: the function name token is blanked and
// the target is the gold name's sub-words.
DatasetManifest make_naming_dataset(const DatasetManifest& manifest);

// Distinct gold names of the training split, sorted (the closed vocabulary L).
std::vector<std::string> build_name_list(const std::vector<ProgramRecord>& records);

// All distinct identifier tokens of the given records (VN name pool).
std::vector<std::string> identifier_pool(const std::vector<ProgramRecord>& records);

void save_dataset(const DatasetManifest& manifest, const std::string& manifest_path);
DatasetManifest load_dataset(const std::string& manifest_path);

std::string template_inventory_hash();

}  // namespace treecaps
