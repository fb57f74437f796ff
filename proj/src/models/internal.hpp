#pragma once

#include <span>
#include <vector>

#include "tpp/autodiff.hpp"
#include "tpp/data.hpp"

namespace tpp::detail {

/// Index vector repeating each of B rows S times.
std::vector<std::size_t> repeat_rows(std::size_t rows, std::size_t times);

/// Returns t unchanged when S == 1, else each row repeated S times.
ad::Tensor expand_rows(const ad::Tensor& t, std::size_t samples);

/// (B*S) x 1 elapsed time since the anchor. Valid rows must not precede it;
/// rows past a sequence's end are clamped to zero.
ad::Tensor elapsed_since_anchor(const PaddedBatch& batch, std::size_t anchor, std::span<const double> times,
                                std::size_t samples);
std::vector<double> elapsed_values(const PaddedBatch& batch, std::size_t anchor, std::span<const double> times,
                                   std::size_t samples);

std::vector<int> column_types(const PaddedBatch& batch, std::size_t j);
std::vector<double> column_dtimes(const PaddedBatch& batch, std::size_t j);
/// B x 1 event mask of column j.
ad::Tensor column_mask(const PaddedBatch& batch, std::size_t j);
/// B x 1 lengths of the interval after anchor a (zero past a row's end).
ad::Tensor interval_lengths(const PaddedBatch& batch, std::size_t a);
std::vector<double> interval_length_values(const PaddedBatch& batch, std::size_t a);

/// Dense MLP layer stack with tanh activations.
ad::Tensor tanh_stack(ad::Tensor x, const std::vector<ad::Tensor>& w, const std::vector<ad::Tensor>& b);

/// s * softplus(x / s) with s = softplus(raw), raw 1 x K.
ad::Tensor scaled_softplus(const ad::Tensor& x, const ad::Tensor& raw);

}  // namespace tpp::detail
