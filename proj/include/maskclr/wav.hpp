// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal RIFF/WAVE reader and writer. Supported payloads: PCM 16-bit and
// IEEE float 32-bit, mono or stereo (stereo collapses to mono by channel
// mean on load).

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskclr/audio.hpp"

namespace maskclr {

struct WavError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Header or chunk structure is broken.
struct MalformedWavError : WavError {
  using WavError::WavError;
};
// Valid RIFF but a codec/layout we do not read.
struct UnsupportedWavError : WavError {
  using WavError::WavError;
};
// Structurally fine but zero audio frames.
struct EmptyWavError : WavError {
  using WavError::WavError;
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
inline std::uint16_t read_u16le(const unsigned char* p) {
  return std::uint16_t(p[0] | p[1] << 8);
}

}  // namespace detail

inline Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MalformedWavError("cannot open wav file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw MalformedWavError("malformed RIFF header: " + path);

  std::uint16_t audio_format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    char id[5] = {0};
    std::memcpy(id, &bytes[pos], 4);
    const std::uint32_t size = detail::read_u32le(&bytes[pos + 4]);
    pos += 8;
    if (pos + size > bytes.size())
      throw MalformedWavError(std::string("truncated chunk '") + id + "': " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw MalformedWavError("fmt chunk too small: " + path);
      audio_format = detail::read_u16le(&bytes[pos]);
      channels = detail::read_u16le(&bytes[pos + 2]);
      sample_rate = detail::read_u32le(&bytes[pos + 4]);
      bits = detail::read_u16le(&bytes[pos + 14]);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = &bytes[pos];
      data_size = size;
    }
    pos += size + (size & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data == nullptr) throw MalformedWavError("missing fmt/data chunk: " + path);
  if (channels != 1 && channels != 2)
    throw UnsupportedWavError("unsupported channel count " + std::to_string(channels) + ": " + path);

  const bool pcm16 = audio_format == 1 && bits == 16;
  const bool f32 = audio_format == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw UnsupportedWavError("unsupported codec (format=" + std::to_string(audio_format) +
                              ", bits=" + std::to_string(bits) + "): " + path);

  const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data_size / frame_bytes;
  if (frames == 0) throw EmptyWavError("zero-length payload: " + path);

  Waveform w;
  w.sample_rate = int(sample_rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        acc += double(v) / 32768.0;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        acc += double(v);
      }
    }
    w.samples[i] = float(acc / channels);
  }
  return w;
}

// Writes mono PCM 16-bit (default) or IEEE float 32-bit.
inline void write_wav(const std::string& path, const Waveform& w, bool as_float = false) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw WavError("cannot create wav file: " + path);

  auto put_u32 = [&f](std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8), (unsigned char)(v >> 16),
                          (unsigned char)(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
  };
  auto put_u16 = [&f](std::uint16_t v) {
    unsigned char b[2] = {(unsigned char)(v), (unsigned char)(v >> 8)};
    f.write(reinterpret_cast<char*>(b), 2);
  };

  const std::uint16_t bits = as_float ? 32 : 16;
  const std::uint32_t data_size = std::uint32_t(w.samples.size() * (bits / 8));
  f.write("RIFF", 4);
  put_u32(36 + data_size);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(16);
  put_u16(as_float ? 3 : 1);
  put_u16(1);  // mono
  put_u32(std::uint32_t(w.sample_rate));
  put_u32(std::uint32_t(w.sample_rate) * (bits / 8));
  put_u16(bits / 8);
  put_u16(bits);
  f.write("data", 4);
  put_u32(data_size);
  for (float s : w.samples) {
    if (as_float) {
      f.write(reinterpret_cast<const char*>(&s), 4);
    } else {
      const double clamped = std::max(-1.0, std::min(1.0, double(s)));
      const std::int16_t v = std::int16_t(std::lrint(clamped * 32767.0));
      put_u16(std::uint16_t(v));
    }
  }
  if (!f) throw WavError("short write: " + path);
}

}  // namespace maskclr
