#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hsspn/common.hpp"

namespace hsspn {

/// Center pixel of a detection; y grows downward.
struct Location {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Location&) const = default;
};

struct Detection {
  PartId part = 0;
  Location at;

  bool operator==(const Detection&) const = default;
};

struct ImageRecord {
  std::string id;
  ClassId label = 0;
  double width = 1.0;
  double height = 1.0;
  std::vector<Detection> detections;

  /// First detection of `part` (input order) whose center lies in `region`.
  std::optional<Location> locate(PartId part, const Region& region) const;
  bool has(PartId part, const Region& region) const { return locate(part, region).has_value(); }

  bool operator==(const ImageRecord&) const = default;
};

struct Dataset {
  std::size_t num_parts = 0;  // vocabulary is 0..num_parts-1
  std::size_t num_classes = 0;
  std::vector<ImageRecord> records;

  std::vector<const ImageRecord*> of_class(ClassId c) const;

  bool operator==(const Dataset&) const = default;
};

}  // namespace hsspn
