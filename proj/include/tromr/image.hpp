#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tromr/common.hpp"

namespace tromr {

ImageU8 png_read_gray(const std::string& path);
void png_write_gray(const std::string& path, const ImageU8& img);

inline ImageF to_float(const ImageU8& img) {
  return img.cast<float>() / 255.0f;
}

ImageU8 to_u8(const ImageF& img);

// Model input convention: ink = 1, paper = 0.
inline ImageF to_ink(const ImageF& intensity) {
  return (1.0f - intensity.array()).matrix();
}

ImageF resize_bilinear(const ImageF& src, int out_h, int out_w);
ImageF gaussian_blur(const ImageF& src, double sigma);

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t hash_image(const ImageU8& img);
std::uint64_t hash_file(const std::string& path);

// Recognizer input prep: scale to the target height preserving aspect ratio,
// then right-pad with paper or truncate at the target width; returns ink.
ImageF prepare_staff_ink(const ImageU8& img, int target_h, int target_w,
                         bool* truncated = nullptr);

// Detector input prep: blur then scale to the fixed detector size; returns ink.
ImageF prepare_page_ink(const ImageU8& img, int target_h, int target_w,
                        double blur_sigma = 1.0);

}  // namespace tromr
