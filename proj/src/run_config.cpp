#include "rwta/run_config.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "rwta/io.hpp"

namespace rwta {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

double num(const std::string& s, const std::string& line) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value in line: " + line);
  }
}

}  // namespace

CodeKind RunConfig::code_kind() const {
  if (eval_kind == "sparse") return CodeKind::Sparse;
  if (eval_kind == "dense") return CodeKind::Dense;
  throw ConfigError("eval.kind must be sparse or dense, got " + eval_kind);
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (synth_mode != "rotate" && synth_mode != "scan")
    throw ConfigError("synth.mode must be rotate or scan, got " + synth_mode);
  if (synth_source != "digits" && synth_source != "idx")
    throw ConfigError("synth.source must be digits or idx, got " + synth_source);
  if (synth_count < 1) throw ConfigError("synth.count must be >= 1");
  if (synth_frames < 1) throw ConfigError("synth.frames must be >= 1");
  if (!std::isfinite(synth_step_degrees))
    throw ConfigError("synth.step_degrees must be finite");
  if (synth_window < 1 || synth_stride < 1)
    throw ConfigError("synth.window and synth.stride must be >= 1");
  if (synth_source == "idx" && (synth_images.empty() || synth_labels.empty()))
    throw ConfigError("synth.source=idx needs synth.images and synth.labels paths");
  parse_feature_mode(eval_features);
  code_kind();
  if (eval_reg < 0 || !std::isfinite(eval_reg)) throw ConfigError("eval.reg must be >= 0");
  if (eval_epochs < 1) throw ConfigError("eval.epochs must be >= 1");
  if (eval_window < 1) throw ConfigError("eval.window must be >= 1");
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << "model.channels=" << model.channels << "\n"
     << "model.enc_kernel=" << model.enc_kernel << "\n"
     << "model.dec_kernel=" << model.dec_kernel << "\n"
     << "model.input_channels=" << model.input_channels << "\n"
     << "train.epochs=" << train.epochs << "\n"
     << "train.batch_size=" << train.batch_size << "\n"
     << "train.sequence_length=" << train.sequence_length << "\n"
     << "train.precision=" << train.precision << "\n"
     << "train.seed=" << train.seed << "\n"
     << "train.wta_rule=" << (train.wta_rule == WtaRule::Mask ? "mask" : "literal") << "\n"
     << "train.log_every=" << train.log_every << "\n"
     << "train.lr=" << fmt(train.lr) << "\n"
     << "train.max_updates=" << train.max_updates << "\n"
     << "train.deterministic=" << (train.deterministic ? 1 : 0) << "\n"
     << "train.clip_norm=" << fmt(train.clip_norm) << "\n"
     << "synth.mode=" << synth_mode << "\n"
     << "synth.source=" << synth_source << "\n"
     << "synth.count=" << synth_count << "\n"
     << "synth.frames=" << synth_frames << "\n"
     << "synth.step_degrees=" << fmt(synth_step_degrees) << "\n"
     << "synth.window=" << synth_window << "\n"
     << "synth.stride=" << synth_stride << "\n"
     << "synth.images=" << synth_images << "\n"
     << "synth.labels=" << synth_labels << "\n"
     << "data.train=" << data_train << "\n"
     << "data.val=" << data_val << "\n"
     << "init.checkpoint=" << init_checkpoint << "\n"
     << "eval.features=" << eval_features << "\n"
     << "eval.kind=" << eval_kind << "\n"
     << "eval.reg=" << fmt(eval_reg) << "\n"
     << "eval.epochs=" << eval_epochs << "\n"
     << "eval.window=" << eval_window << "\n";
  return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("bad config line: " + line);
    const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    if (key == "model.channels") cfg.model.channels = int(num(val, line));
    else if (key == "model.enc_kernel") cfg.model.enc_kernel = int(num(val, line));
    else if (key == "model.dec_kernel") cfg.model.dec_kernel = int(num(val, line));
    else if (key == "model.input_channels") cfg.model.input_channels = int(num(val, line));
    else if (key == "train.epochs") cfg.train.epochs = int(num(val, line));
    else if (key == "train.batch_size") cfg.train.batch_size = int(num(val, line));
    else if (key == "train.sequence_length") cfg.train.sequence_length = int(num(val, line));
    else if (key == "train.precision") cfg.train.precision = val;
    else if (key == "train.seed") cfg.train.seed = std::strtoull(val.c_str(), nullptr, 10);
    else if (key == "train.wta_rule") {
      if (val == "mask") cfg.train.wta_rule = WtaRule::Mask;
      else if (val == "literal") cfg.train.wta_rule = WtaRule::Literal;
      else throw ConfigError("unknown train.wta_rule: " + val);
    } else if (key == "train.log_every") cfg.train.log_every = int(num(val, line));
    else if (key == "train.lr") cfg.train.lr = num(val, line);
    else if (key == "train.max_updates") cfg.train.max_updates = std::int64_t(num(val, line));
    else if (key == "train.deterministic") cfg.train.deterministic = num(val, line) != 0;
    else if (key == "train.clip_norm") cfg.train.clip_norm = num(val, line);
    else if (key == "synth.mode") cfg.synth_mode = val;
    else if (key == "synth.source") cfg.synth_source = val;
    else if (key == "synth.count") cfg.synth_count = int(num(val, line));
    else if (key == "synth.frames") cfg.synth_frames = int(num(val, line));
    else if (key == "synth.step_degrees") cfg.synth_step_degrees = num(val, line);
    else if (key == "synth.window") cfg.synth_window = int(num(val, line));
    else if (key == "synth.stride") cfg.synth_stride = int(num(val, line));
    else if (key == "synth.images") cfg.synth_images = val;
    else if (key == "synth.labels") cfg.synth_labels = val;
    else if (key == "data.train") cfg.data_train = val;
    else if (key == "data.val") cfg.data_val = val;
    else if (key == "init.checkpoint") cfg.init_checkpoint = val;
    else if (key == "eval.features") cfg.eval_features = val;
    else if (key == "eval.kind") cfg.eval_kind = val;
    else if (key == "eval.reg") cfg.eval_reg = num(val, line);
    else if (key == "eval.epochs") cfg.eval_epochs = int(num(val, line));
    else if (key == "eval.window") cfg.eval_window = int(num(val, line));
    else throw ConfigError("unknown config key: " + key);
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) { return parse(io::slurp(path)); }

void RunConfig::save(const std::string& path) const { io::spit(path, serialize()); }

}  // namespace rwta
