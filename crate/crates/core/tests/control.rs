mod common;

use std::sync::{Arc, Mutex};

use atl_core::control::{ForceSupervisorState, SupervisorPhase};
use atl_core::modbus::codec::{Request, Response};
use atl_core::modbus::{AcfDevice, ClientError, LoopbackTransport, RegisterTransport, SharedDevice};
use atl_core::plant::{AcfError, AcfState};
use atl_core::Alarm;

/// Loopback link that keeps every request it carried.
struct Recorder {
    inner: LoopbackTransport,
    log: Vec<Request>,
}

impl RegisterTransport for Recorder {
    fn transact(&mut self, req: &Request) -> Result<Response, ClientError> {
        self.log.push(req.clone());
        self.inner.transact(req)
    }
}

fn setup() -> (SharedDevice, Recorder) {
    let params = common::scenario().acf.params();
    let dev: SharedDevice = Arc::new(Mutex::new(AcfDevice::new(AcfState::new(params, 0.0, 0.0, 0.0))));
    let rec = Recorder {
        inner: LoopbackTransport::new(dev.clone(), 1),
        log: Vec::new(),
    };
    (dev, rec)
}

fn force_writes(log: &[Request]) -> usize {
    log.iter()
        .filter(|r| match r {
            Request::WriteSingleRegister { address, .. } => *address == 0,
            Request::WriteMultipleRegisters { address, .. } => *address == 0,
            _ => false,
        })
        .count()
}

#[test]
fn first_tick_configures_then_enables_then_polls() {
    let (dev, mut link) = setup();
    let mut sup = ForceSupervisorState::new(30.0, 1.5, 100.0);
    sup.enable_request = true;
    assert!(sup.step(&mut link).is_empty());
    assert_eq!(
        link.log,
        vec![
            Request::WriteMultipleRegisters { address: 0, values: vec![300, 150, 1000] },
            Request::WriteSingleRegister { address: 3, value: 1 },
            Request::ReadInputRegisters { address: 0, quantity: 4 },
        ]
    );
    assert_eq!(sup.phase, SupervisorPhase::Monitoring);
    let d = dev.lock().unwrap();
    assert_eq!((d.state.target_force, d.state.payload, d.state.contact_ramp), (30.0, 1.5, 100.0));
    assert!(d.state.enabled);

    // Steady state is a single poll per tick.
    drop(d);
    link.log.clear();
    sup.step(&mut link);
    assert_eq!(link.log, vec![Request::ReadInputRegisters { address: 0, quantity: 4 }]);
}

#[test]
fn device_error_faults_and_blocks_force_writes_until_acknowledged() {
    let (dev, mut link) = setup();
    let mut sup = ForceSupervisorState::new(30.0, 1.5, 100.0);
    sup.enable_request = true;
    sup.step(&mut link);
    dev.lock().unwrap().state.error_code = AcfError::StrokeLimit;

    let alarms = sup.step(&mut link);
    assert_eq!(alarms, vec![Alarm::AcfError { code: 1 }]);
    assert_eq!(sup.phase, SupervisorPhase::Faulted);

    link.log.clear();
    sup.set_force(40.0);
    for _ in 0..20 {
        assert!(sup.step(&mut link).is_empty(), "alarm raised once");
    }
    assert_eq!(force_writes(&link.log), 0, "{:?}", link.log);
    assert!(link.log.contains(&Request::WriteSingleRegister { address: 3, value: 0 }));

    sup.acknowledge();
    link.log.clear();
    sup.step(&mut link);
    assert_eq!(link.log[0], Request::WriteSingleRegister { address: 4, value: 1 });
    assert_eq!(dev.lock().unwrap().state.error_code, AcfError::None);
    assert_eq!(sup.phase, SupervisorPhase::Configured);
    sup.step(&mut link);
    assert_eq!(force_writes(&link.log), 1);
    assert_eq!(dev.lock().unwrap().state.target_force, 40.0);
}

#[test]
fn link_loss_is_a_comm_timeout_latched_until_acknowledged() {
    let (dev, mut link) = setup();
    let mut sup = ForceSupervisorState::new(30.0, 1.5, 100.0);
    sup.step(&mut link);
    link.inner.set_link_down(true);
    assert_eq!(sup.step(&mut link), vec![Alarm::CommTimeout]);
    assert!(sup.comm_fault());
    assert_eq!(sup.phase, SupervisorPhase::Faulted);

    link.inner.set_link_down(false);
    link.log.clear();
    for _ in 0..5 {
        assert!(sup.step(&mut link).is_empty());
    }
    assert!(link.log.is_empty(), "no traffic while latched");

    sup.acknowledge();
    sup.step(&mut link);
    sup.step(&mut link);
    assert!(!sup.comm_fault());
    assert_eq!(sup.phase, SupervisorPhase::Monitoring);
    assert_eq!(dev.lock().unwrap().state.target_force, 30.0);
}

#[test]
fn force_setpoint_lands_as_tenths_of_newton() {
    let (dev, mut link) = setup();
    let mut sup = ForceSupervisorState::new(30.0, 0.0, 100.0);
    sup.step(&mut link);
    assert_eq!(dev.lock().unwrap().holding_image()[0], 300);
    sup.set_force(12.34);
    sup.step(&mut link);
    assert_eq!(dev.lock().unwrap().holding_image()[0], 123);
}
