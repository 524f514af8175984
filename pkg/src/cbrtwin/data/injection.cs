import InjectionMolding;

similarity InjectionSimilarity {
  local ProcessData.nozzleTemperature absolute;
  local ProcessData.pressure manual pressureBand;
  local PhaseData.switchOverVolume absolute;
  local PhaseData.cylinderHeating absolute;
  local PhaseData.backPressure squared;
  local PhaseData.dosingTime squared;
  local PhaseData.injectionFlow absolute;
  global weighted {
    ProcessData.nozzleTemperature weight 0.5;
    ProcessData.pressure weight 0.5;
    PhaseData.switchOverVolume weight 0.4;
    PhaseData.cylinderHeating weight 0.05;
    PhaseData.backPressure weight 0.2;
    PhaseData.dosingTime weight 0.2;
    PhaseData.injectionFlow weight 0.15;
  }
}
