#include "ooc/ooc.h"

#include <memory>
#include <new>
#include <string>
#include <vector>

#include "ooc/corpus_analytics.hpp"
#include "ooc/errors.hpp"
#include "ooc/forensic_metrics.hpp"
#include "ooc/fusion_detector.hpp"
#include "ooc/pipeline.hpp"

struct ooc_config {
  ooc::KeyValueConfig kv;
};

struct ooc_matrix {
  ooc::EmbeddingMatrix m;
};

struct ooc_model {
  ooc::DetectorModel m;
};

namespace {

thread_local std::string g_last_error;

ooc_status status_of(ooc::ErrorKind kind) {
  using K = ooc::ErrorKind;
  switch (kind) {
    case K::format: return OOC_ERR_FORMAT;
    case K::alignment: return OOC_ERR_ALIGNMENT;
    case K::validation: return OOC_ERR_VALIDATION;
    case K::missing_id: return OOC_ERR_MISSING_ID;
    case K::degenerate: return OOC_ERR_DEGENERATE;
    case K::argument: return OOC_ERR_ARGUMENT;
    case K::insufficient: return OOC_ERR_INSUFFICIENT;
    case K::divergence: return OOC_ERR_DIVERGENCE;
    case K::undefined_metric: return OOC_ERR_UNDEFINED_METRIC;
    case K::config: return OOC_ERR_CONFIG;
    case K::io: return OOC_ERR_IO;
  }
  return OOC_ERR_INTERNAL;
}

template <typename Fn>
ooc_status guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return OOC_OK;
  } catch (const ooc::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return OOC_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return OOC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "internal error";
    return OOC_ERR_INTERNAL;
  }
}

void require_ptr(const void* p, const char* what) {
  if (!p) ooc::fail(ooc::ErrorKind::argument, std::string(what) + " is NULL");
}

}  // namespace

extern "C" {

const char* ooc_last_error(void) { return g_last_error.c_str(); }

const char* ooc_status_string(ooc_status status) {
  switch (status) {
    case OOC_OK: return "ok";
    case OOC_ERR_FORMAT: return "format error";
    case OOC_ERR_ALIGNMENT: return "alignment error";
    case OOC_ERR_VALIDATION: return "validation error";
    case OOC_ERR_MISSING_ID: return "missing id";
    case OOC_ERR_DEGENERATE: return "degenerate input";
    case OOC_ERR_ARGUMENT: return "invalid argument";
    case OOC_ERR_INSUFFICIENT: return "insufficient candidates";
    case OOC_ERR_DIVERGENCE: return "training diverged";
    case OOC_ERR_UNDEFINED_METRIC: return "undefined metric";
    case OOC_ERR_CONFIG: return "configuration error";
    case OOC_ERR_IO: return "i/o error";
    case OOC_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

int ooc_exit_code(ooc_status status) {
  if (status == OOC_OK) return 0;
  if (status == OOC_ERR_INTERNAL) return 2;
  return 1;
}

const char* ooc_version(void) { return "0.1.0"; }

ooc_status ooc_config_create(ooc_config** out) {
  return guard([&] {
    require_ptr(out, "out");
    *out = new ooc_config();
  });
}

void ooc_config_destroy(ooc_config* cfg) { delete cfg; }

ooc_status ooc_config_load_file(ooc_config* cfg, const char* path) {
  return guard([&] {
    require_ptr(cfg, "config");
    require_ptr(path, "path");
    cfg->kv.load_file(path);
  });
}

ooc_status ooc_config_set(ooc_config* cfg, const char* key, const char* value) {
  return guard([&] {
    require_ptr(cfg, "config");
    require_ptr(key, "key");
    require_ptr(value, "value");
    cfg->kv.set(key, value);
  });
}

ooc_status ooc_config_apply_env(ooc_config* cfg) {
  return guard([&] {
    require_ptr(cfg, "config");
    cfg->kv.apply_environment();
  });
}

ooc_status ooc_config_validate(const ooc_config* cfg) {
  return guard([&] {
    require_ptr(cfg, "config");
    (void)ooc::resolve_config(cfg->kv);
  });
}

ooc_status ooc_run_command(const ooc_config* cfg, const char* command, ooc_text_fn out, ooc_text_fn warn,
                           void* user) {
  return guard([&] {
    require_ptr(cfg, "config");
    require_ptr(command, "command");
    const auto rc = ooc::resolve_config(cfg->kv);
    auto sink = [user](ooc_text_fn fn) -> ooc::TextSink {
      if (!fn) return [](std::string_view) {};
      return [fn, user](std::string_view s) { fn(s.data(), s.size(), user); };
    };
    ooc::run_command(command, rc, {sink(out), sink(warn)});
  });
}

ooc_status ooc_matrix_load(const char* path, ooc_matrix** out) {
  return guard([&] {
    require_ptr(path, "path");
    require_ptr(out, "out");
    *out = new ooc_matrix{ooc::load_matrix(path)};
  });
}

ooc_status ooc_matrix_create(const char* const* ids, size_t n, size_t dim, const float* values, ooc_matrix** out) {
  return guard([&] {
    require_ptr(out, "out");
    if (n > 0) {
      require_ptr(ids, "ids");
      if (dim > 0) require_ptr(values, "values");
    }
    std::vector<std::string> id_list;
    id_list.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      require_ptr(ids[i], "id");
      id_list.emplace_back(ids[i]);
    }
    std::vector<float> v(values, values + n * dim);
    *out = new ooc_matrix{ooc::EmbeddingMatrix(std::move(id_list), dim, std::move(v))};
  });
}

ooc_status ooc_matrix_save(const ooc_matrix* m, const char* path) {
  return guard([&] {
    require_ptr(m, "matrix");
    require_ptr(path, "path");
    ooc::save_matrix(m->m, path);
  });
}

ooc_status ooc_matrix_normalize(const ooc_matrix* m, ooc_matrix** out) {
  return guard([&] {
    require_ptr(m, "matrix");
    require_ptr(out, "out");
    *out = new ooc_matrix{ooc::normalize(m->m)};
  });
}

size_t ooc_matrix_rows(const ooc_matrix* m) { return m ? m->m.rows() : 0; }
size_t ooc_matrix_dim(const ooc_matrix* m) { return m ? m->m.dim() : 0; }

ooc_status ooc_matrix_lookup(const ooc_matrix* m, const char* id, const float** row) {
  return guard([&] {
    require_ptr(m, "matrix");
    require_ptr(id, "id");
    require_ptr(row, "row");
    *row = m->m.lookup(id).data();
  });
}

void ooc_matrix_destroy(ooc_matrix* m) { delete m; }

double ooc_zero_shot_score(const float* img, const float* txt, size_t dim) {
  if (!img || !txt) return 0.0;
  return ooc::zero_shot_score({img, dim}, {txt, dim});
}

ooc_status ooc_model_load(const char* path, ooc_model** out) {
  return guard([&] {
    require_ptr(path, "path");
    require_ptr(out, "out");
    *out = new ooc_model{ooc::load_model(path)};
  });
}

size_t ooc_model_dim(const ooc_model* model) { return model ? model->m.dim : 0; }

ooc_status ooc_model_predict(const ooc_model* model, const float* img, const float* txt, size_t dim,
                             double* prob) {
  return guard([&] {
    require_ptr(model, "model");
    require_ptr(img, "img");
    require_ptr(txt, "txt");
    require_ptr(prob, "prob");
    if (dim != model->m.dim) {
      ooc::fail(ooc::ErrorKind::argument, "dimension " + std::to_string(dim) + " does not match model dimension " +
                                              std::to_string(model->m.dim));
    }
    *prob = ooc::predict(model->m, {img, dim}, {txt, dim});
  });
}

void ooc_model_destroy(ooc_model* model) { delete model; }

ooc_status ooc_metrics_summarize(const double* scores, const int* labels, size_t n, ooc_metrics* out) {
  return guard([&] {
    require_ptr(out, "out");
    if (n > 0) {
      require_ptr(scores, "scores");
      require_ptr(labels, "labels");
    }
    std::vector<ooc::PairLabel> lab(n);
    for (size_t i = 0; i < n; ++i) {
      if (labels[i] != 0 && labels[i] != 1) ooc::fail(ooc::ErrorKind::argument, "labels must be 0 or 1");
      lab[i] = labels[i] ? ooc::PairLabel::falsified : ooc::PairLabel::pristine;
    }
    const auto s = ooc::summarize(std::span<const double>(scores, n), lab);
    *out = {s.pd_at_far01, s.pd_at_eer, s.acc_at_eer, s.eer, s.eer_threshold, s.n_pos, s.n_neg};
  });
}

ooc_status ooc_ocr_coverage(int64_t width, int64_t height, const int64_t* boxes, size_t n_boxes,
                            double* coverage) {
  return guard([&] {
    require_ptr(coverage, "coverage");
    if (n_boxes > 0) require_ptr(boxes, "boxes");
    ooc::OcrRecord rec;
    rec.image_id = "<c-api>";
    rec.width = width;
    rec.height = height;
    for (size_t b = 0; b < n_boxes; ++b)
      rec.boxes.push_back({boxes[4 * b], boxes[4 * b + 1], boxes[4 * b + 2], boxes[4 * b + 3]});
    *coverage = ooc::ocr_coverage(rec);
  });
}

const char* ooc_coverage_bucket(double coverage) {
  // Labels are string literals, so the pointer stays valid.
  try {
    return ooc::bucket_label(ooc::bucket(coverage)).data();
  } catch (...) {
    return "";
  }
}

}  // extern "C"
