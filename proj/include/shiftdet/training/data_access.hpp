// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// Views that the trainer reads data through. Every read is counted so runs
// can prove which splits and which labels they touched.

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "shiftdet/core/errors.hpp"
#include "shiftdet/domain/image.hpp"

namespace shiftdet {

class AccessAudit {
 public:
  void image_read(const std::string& split) { ++images_[split]; }
  void label_read(const std::string& split) { ++labels_[split]; }
  // Labels read by an analysis probe that has no path back into training.
  void analysis_read(const std::string& split) { ++analysis_[split]; }

  std::size_t image_reads(const std::string& split) const { return get(images_, split); }
  std::size_t label_reads(const std::string& split) const { return get(labels_, split); }
  std::size_t analysis_reads(const std::string& split) const { return get(analysis_, split); }
  bool touched(const std::string& split) const {
    return image_reads(split) + label_reads(split) + analysis_reads(split) > 0;
  }

  void reset() { images_.clear(), labels_.clear(), analysis_.clear(); }

 private:
  static std::size_t get(const std::map<std::string, std::size_t>& m, const std::string& k) {
    auto it = m.find(k);
    return it == m.end() ? 0 : it->second;
  }
  std::map<std::string, std::size_t> images_, labels_, analysis_;
};

// Labeled images; each access counts as one image read and one label read.
class LabeledPool {
 public:
  LabeledPool(const Dataset& ds, AccessAudit* audit) : ds_(&ds), audit_(audit) {
    if (ds.items.empty()) throw DataError("split " + ds.name + " is empty");
  }

  const std::string& name() const { return ds_->name; }
  std::size_t size() const { return ds_->items.size(); }
  DomainTag domain() const { return ds_->domain; }

  const AnnotatedImage& get(std::size_t i) const {
    if (audit_) audit_->image_read(ds_->name), audit_->label_read(ds_->name);
    return ds_->items.at(i);
  }

 private:
  const Dataset* ds_;
  AccessAudit* audit_;
};

// Pixels only. Annotations and depth are dropped on construction, so nothing
// downstream can see them.
class UnlabeledPool {
 public:
  UnlabeledPool(const Dataset& ds, AccessAudit* audit) : name_(ds.name), domain_(ds.domain), audit_(audit) {
    if (ds.items.empty()) throw DataError("split " + ds.name + " is empty");
    items_.reserve(ds.items.size());
    for (const auto& it : ds.items) items_.push_back({it.pixels, {}, it.domain, std::nullopt});
  }

  const std::string& name() const { return name_; }
  std::size_t size() const { return items_.size(); }
  DomainTag domain() const { return domain_; }

  const AnnotatedImage& get(std::size_t i) const {
    if (audit_) audit_->image_read(name_);
    return items_.at(i);
  }

 private:
  std::string name_;
  DomainTag domain_;
  std::vector<AnnotatedImage> items_;
  AccessAudit* audit_;
};

}  // namespace shiftdet
