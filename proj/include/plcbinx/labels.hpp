#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "plcbinx/funcrec.hpp"

namespace plcbinx {

inline constexpr std::array<std::string_view, 22> kFunctionalityLabels = {
    "Actuators_HVAC",   "Arithmetic_Func", "Array_Buffer_Mem_List", "Basic_Dev_Drivers", "Basic_Other_Func",
    "Building_Other_Func", "Calculations", "Complex_Math", "Ctrl_Mods", "Latches_FlipFlop_ShiftReg",
    "Logic_Mods",       "Mathematics",     "Measure_Mods",          "Network_1",         "Network_2",
    "Pulse_Gen",        "Sensors",         "Signal_Gen",            "Signal_Proc",       "Str_Func",
    "Time_and_Date",    "Vector_Math"};

enum class Family { CODESYS, GEB, OpenPLC };
inline constexpr Family kAllFamilies[] = {Family::CODESYS, Family::GEB, Family::OpenPLC};

inline const char* to_string(Family f) {
  switch (f) {
    case Family::CODESYS: return "CODESYS";
    case Family::GEB: return "GEB";
    case Family::OpenPLC: return "OpenPLC";
  }
  return "?";
}

inline Family family_of(Platform p) {
  switch (p) {
    case Platform::CODESYSv3: return Family::CODESYS;
    case Platform::GEB: return Family::GEB;
    case Platform::OpenPLCv2:
    case Platform::OpenPLCv3: return Family::OpenPLC;
  }
  return Family::OpenPLC;
}

}  // namespace plcbinx
