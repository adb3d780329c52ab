#include "flap/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace flap::objectives {

namespace {

void check_unit_rows(const Tensor& emb, const char* which) {
  size_t rows = emb.extent(0), d = emb.extent(1);
  for (size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (size_t j = 0; j < d; ++j) {
      sq += emb.at(r, j) * emb.at(r, j);
    }
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
      throw std::invalid_argument(std::string(which) + " row " +
                                  std::to_string(r) +
                                  " is not unit-normalized");
    }
  }
}

Tensor info_nce_impl(Tape& tape, const Tensor& audio, const Tensor& text,
                     const Tensor& inv_tau, bool symmetric) {
  if (audio.rank() != 2 || audio.shape() != text.shape()) {
    throw std::invalid_argument("info_nce: embeddings must be [B,D] pairs, got " +
                                audio.shape_str() + " vs " + text.shape_str());
  }
  check_unit_rows(audio, "audio");
  check_unit_rows(text, "text");

  size_t b = audio.extent(0);
  std::vector<size_t> diagonal(b);
  for (size_t i = 0; i < b; ++i) {
    diagonal[i] = i;
  }

  // S(a_i, t_j) is the plain dot product since rows are unit vectors.
  Tensor sim = tape.matmul(audio, tape.transpose(text));
  Tensor logits = tape.mul_scalar(sim, inv_tau);
  Tensor loss = tape.cross_entropy_rows(logits, diagonal);
  if (!symmetric) {
    return loss;
  }
  Tensor t2a = tape.cross_entropy_rows(tape.transpose(logits), diagonal);
  return tape.scale(tape.add(loss, t2a), 0.5);
}

}  // namespace

Tensor info_nce(Tape& tape, const Tensor& audio, const Tensor& text,
                const Tensor& log_tau, bool symmetric) {
  if (log_tau.size() != 1) {
    throw std::invalid_argument("info_nce: log_tau must be scalar");
  }
  Tensor inv_tau = tape.exp_elem(tape.scale(log_tau, -1.0));
  return info_nce_impl(tape, audio, text, inv_tau, symmetric);
}

Tensor info_nce(Tape& tape, const Tensor& audio, const Tensor& text, double tau,
                bool symmetric) {
  if (tau <= 0.0) {
    throw std::invalid_argument("info_nce: temperature must be positive, got " +
                                std::to_string(tau));
  }
  return info_nce_impl(tape, audio, text, Tensor::scalar(1.0 / tau), symmetric);
}

ReconstructionLoss reconstruction_mse(Tape& tape, const Tensor& reconstructed,
                                      const Tensor& target_patches,
                                      const masking::MaskPlan& plan) {
  ReconstructionLoss out;
  out.masked_patches = plan.dropped_count() * plan.dropped.size();
  out.active = out.masked_patches > 0;
  out.loss = tape.mse_masked(reconstructed, target_patches, plan.dropped);
  return out;
}

CombinedLoss combined_loss(Tape& tape, const Tensor& audio, const Tensor& text,
                           const Tensor& log_tau,
                           const ReconstructionLoss& recon, double lambda_recon,
                           bool symmetric) {
  CombinedLoss out;
  Tensor contrastive = info_nce(tape, audio, text, log_tau, symmetric);
  out.total = recon.active && lambda_recon != 0.0
                  ? tape.add(contrastive, tape.scale(recon.loss, lambda_recon))
                  : contrastive;
  out.report.contrastive = contrastive.value();
  out.report.reconstruction = recon.active ? recon.loss.value() : 0.0;
  out.report.total = out.total.value();
  out.report.tau = std::exp(log_tau.value());
  out.report.lambda_recon = lambda_recon;
  out.report.reconstruction_active = recon.active;
  return out;
}

}  // namespace flap::objectives
