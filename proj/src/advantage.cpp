#include "fr3e/advantage.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace fr3e {

double modulation_factor(double value_prev, double value) {
  if (!(value_prev >= 0.0 && value_prev <= 1.0) ||
      !(value >= 0.0 && value <= 1.0))
    throw std::invalid_argument("modulation_factor: values must lie in [0, 1]");
  return std::exp(value_prev - value);
}

double raw_advantage(int reward, double value) {
  if (reward != 0 && reward != 1)
    throw std::invalid_argument("raw_advantage: reward must be binary");
  return static_cast<double>(reward) - value;
}

double modulate(double alpha, double raw) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw std::invalid_argument("modulate: alpha must be positive and finite");
  return alpha * raw;
}

double batch_mean_modulated(const std::vector<AdvantageRecord>& records,
                            bool equal_lengths) {
  if (records.empty())
    throw std::invalid_argument("batch_mean_modulated: empty batch");

  if (equal_lengths) {
    std::map<int, int> group_length;
    for (const AdvantageRecord& rec : records) {
      auto [it, inserted] = group_length.emplace(rec.state_index,
                                                 rec.token_count);
      if (!inserted && it->second != rec.token_count)
        throw std::invalid_argument(
            "batch_mean_modulated: unequal lengths inside a group despite the "
            "equal_lengths claim");
    }
  }

  double weighted = 0.0;
  double tokens = 0.0;
  for (const AdvantageRecord& rec : records) {
    weighted += static_cast<double>(rec.token_count) * rec.modulated;
    tokens += static_cast<double>(rec.token_count);
  }
  if (tokens <= 0.0)
    throw std::invalid_argument("batch_mean_modulated: batch has no tokens");
  return weighted / tokens;
}

std::vector<double> grpo_group_advantage(const std::vector<int>& rewards) {
  if (rewards.size() < 2)
    throw std::invalid_argument("grpo_group_advantage: need at least 2 rewards");

  double mean = 0.0;
  for (int r : rewards) {
    if (r != 0 && r != 1)
      throw std::invalid_argument("grpo_group_advantage: reward must be binary");
    mean += static_cast<double>(r);
  }
  mean /= static_cast<double>(rewards.size());

  double var = 0.0;
  for (int r : rewards) {
    double d = static_cast<double>(r) - mean;
    var += d * d;
  }
  var /= static_cast<double>(rewards.size());
  double std_dev = std::sqrt(var);
  if (std_dev == 0.0)
    throw std::invalid_argument(
        "grpo_group_advantage: zero reward spread; uniform groups must be "
        "rejected before normalization");

  std::vector<double> out;
  out.reserve(rewards.size());
  for (int r : rewards) out.push_back((static_cast<double>(r) - mean) / std_dev);
  return out;
}

}  // namespace fr3e
